"""EXIT-chart machinery: decoder curve ingestion, diagonal-sampling
convergence targets, BEP conversion and trajectory simulation."""
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.interpolate import PchipInterpolator

from ._validation import InfeasibleError
from .equalizer import delta_bar_of_mi
from .jfunc import J_inv, bep_of_targets  # noqa: F401  (re-exported)


class CurveFormatError(ValueError):
    pass


class ExitCurve:
    """Monotone decoder EXIT function ``I_E = f(I_A)`` with its inverse."""

    def __init__(self, i_a, i_e, meta=None):
        self.i_a = np.asarray(i_a, float)
        self.i_e = np.asarray(i_e, float)
        self.meta = dict(meta or {})
        self._fwd = PchipInterpolator(self.i_a, self.i_e, extrapolate=False)
        self._inv = PchipInterpolator(self.i_e, self.i_a, extrapolate=False)

    def __call__(self, i_a):
        x = np.clip(np.asarray(i_a, float), self.i_a[0], self.i_a[-1])
        out = self._fwd(x)
        return out if np.ndim(out) else float(out)

    def inverse(self, i_e):
        """``f^-1``; values below ``f(0)`` map to the first abscissa."""
        y = np.clip(np.asarray(i_e, float), self.i_e[0], self.i_e[-1])
        out = self._inv(y)
        return out if np.ndim(out) else float(out)

    def to_csv(self, path):
        header = " ".join(f"{k}={v}" for k, v in self.meta.items())
        with open(path, "w") as fh:
            fh.write(f"# {header}\n")
            for a, e in zip(self.i_a, self.i_e):
                fh.write(f"{a:.6f},{e:.6f}\n")


def identity_curve(points=11):
    x = np.linspace(0, 1, points)
    return ExitCurve(x, x, {"code": "identity", "rate": 1, "source": "synthetic"})


def _parse_header(line):
    meta = {}
    for token in line.lstrip("#").split():
        if "=" in token:
            k, v = token.split("=", 1)
            meta[k] = v
    return meta


def load_decoder_curve(path):
    """Read a ``# code=.. rate=.. source=..`` header followed by ``I_A,I_E`` rows."""
    meta = {}
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta.update(_parse_header(line))
                continue
            parts = line.split(",")
            try:
                a, e = (float(x) for x in parts)
            except ValueError:
                raise CurveFormatError(f"{path}: row {lineno} is not an 'I_A,I_E' pair") from None
            if not (0 <= a <= 1 and 0 <= e <= 1):
                raise CurveFormatError(f"{path}: row {lineno} lies outside [0, 1]")
            if rows and (a <= rows[-1][0] or e <= rows[-1][1]):
                raise CurveFormatError(f"{path}: row {lineno} breaks strict monotonicity")
            rows.append((a, e))
    if len(rows) < 2:
        raise CurveFormatError(f"{path}: need at least two rows")
    a, e = np.array(rows).T
    return ExitCurve(a, e, meta)


def ra_rate13_curve():
    """Bundled measured EXIT curve of the rate-1/3 systematic RA decoder."""
    ref = resources.files("papralloc") / "data" / "ra_rate13.csv"
    with resources.as_file(ref) as path:
        return load_decoder_curve(path)


@dataclass
class ConvergenceTargets:
    """Per-user diagonal-sampling grid and the SINR thresholds it implies.

    All arrays have shape ``(U, K)``; ``required`` is the equalizer output MI
    each grid point asks for.
    """

    grid: np.ndarray
    required: np.ndarray
    sigma_ring: np.ndarray
    delta_bar: np.ndarray
    xi: np.ndarray
    eps: np.ndarray

    @property
    def num_users(self):
        return self.grid.shape[0]

    @property
    def grid_size(self):
        return self.grid.shape[1]


def build_targets(curves, K, eps, ie_ring_target, ie_hat_target=None, samples=100_000, seed=0):
    """Convergence thresholds on ``K`` points along the diagonal.

    ``curves`` is one decoder curve per user (or a single shared curve).  The
    grid runs uniformly from 0 to the decoder-output target.  The last point
    asks for ``ie_hat_target`` when given (the preset convergence point),
    otherwise for ``f^-1`` of the decoder target.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    eps = np.atleast_1d(np.asarray(eps, float))
    ie_ring_target = np.atleast_1d(np.asarray(ie_ring_target, float))
    U = max(len(eps), len(ie_ring_target), len(curves) if isinstance(curves, (list, tuple)) else 1)
    if not isinstance(curves, (list, tuple)):
        curves = [curves] * U
    eps = np.broadcast_to(eps, (U,))
    ie_ring_target = np.broadcast_to(ie_ring_target, (U,))

    grid = np.linspace(0.0, 1.0, K)[None, :] * ie_ring_target[:, None]
    eps_k = np.repeat(eps[:, None], K, axis=1)
    eps_k[:, -1] = 0.0
    required = np.stack([curves[u].inverse(grid[u]) for u in range(U)]) + eps_k
    if ie_hat_target is not None:
        required[:, -1] = np.broadcast_to(np.asarray(ie_hat_target, float), (U,))
    bad = np.argwhere(required >= 1)
    if bad.size:
        u, k = bad[0]
        raise InfeasibleError(f"target for user {u} at grid point {k} needs I_E >= 1", where=(int(u), int(k)))
    sigma_ring = J_inv(required)
    dbar = np.vectorize(lambda x: delta_bar_of_mi(x, samples, seed))(grid)
    xi = sigma_ring**2 / (4.0 + sigma_ring**2 * dbar)
    return ConvergenceTargets(grid=grid, required=required, sigma_ring=sigma_ring, delta_bar=dbar, xi=xi, eps=eps_k)


@dataclass
class Trajectory:
    """Staircase of ``(I_hat_E, I_ring_E)`` per user and iteration."""

    points: np.ndarray  # (iters, U, 2)
    converged: bool

    @property
    def endpoint(self):
        return self.points[-1]

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iter,user,I_hat_E,I_ring_E\n")
            for it, row in enumerate(self.points, start=1):
                for u, (ih, ir) in enumerate(row):
                    fh.write(f"{it},{u},{ih:.6f},{ir:.6f}\n")


def simulate_trajectory(equalizer, curves, max_iters=50, tol=1e-6, start=None):
    """Alternate equalizer and decoder activations until the MI stops moving.

    ``equalizer`` maps the decoder-output MI vector to the equalizer-output
    MI vector.  A trajectory that stops short of its target is simply
    reported with its final (stalled) point.
    """
    if not isinstance(curves, (list, tuple)):
        curves = None if curves is None else [curves]
    ring = np.zeros(len(curves)) if start is None else np.asarray(start, float)
    points = []
    converged = False
    for _ in range(max_iters):
        hat = np.asarray(equalizer(ring), float)
        if len(curves) == 1 and hat.size > 1:
            curves = curves * hat.size
        new_ring = np.array([min(float(curves[u](hat[u])), 1.0 - 1e-12) for u in range(hat.size)])
        points.append(np.stack([hat, new_ring], axis=1))
        if len(points) > 1 and np.max(np.abs(points[-1] - points[-2])) < tol:
            converged = True
            break
        ring = new_ring
    return Trajectory(points=np.array(points), converged=converged)
