"""Successive convex approximation for convergence-constrained power
allocation, with and without per-user PAPR constraints.

Powers enter as ``alpha = ln(P / noise_var)``.  The auxiliary SINR variables
of the log-domain reformulation are eliminated: for a fixed linearization
point ``t_hat`` the tightest admissible value is

    t = t_hat * (1 + LHS(alpha) - ln t_hat),

so each subproblem lives in ``alpha`` only.  Every receive filter is scaled to
unit norm, which leaves the SINR terms unchanged.
"""
from dataclasses import dataclass, field
import warnings

import numpy as np

from ._validation import InfeasibleError, check_power
from .equalizer import _interference_cov
from .papr import build_papr_model
from .solver import NumericalError, barrier_solve, find_strictly_feasible

FLOOR = 1e-12  # lowest per-bin power, relative to the noise variance
LOG_FLOOR = np.log(FLOOR)
# log-domain room on the linearised PAPR rows; a 0 dB bound otherwise has no interior
PAPR_SLACK = 1e-9


def unit_receivers(gamma, P, delta_bar, noise_var):
    """Unit-norm MMSE filters ``omega[k, u, m, r]`` for every grid point.

    ``delta_bar`` has shape ``(U, K)``.  Only the direction of the MMSE
    filter matters for the SINR, so bins at zero power still get one.
    """
    gamma = np.asarray(gamma, complex)
    P = check_power(P, gamma.shape[:2])
    R = _interference_cov(gamma, P, np.asarray(delta_bar, float).T, noise_var)  # (K, m, r, s)
    rhs = np.broadcast_to(np.moveaxis(gamma, 0, -1), R.shape[:-1] + (gamma.shape[0],))
    v = np.moveaxis(np.linalg.solve(R, rhs), -1, -3)  # (K, u, m, r)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def bin_sinr(gamma, omega, P, delta_bar, noise_var):
    """Per-bin SINR ``[k, u, m]`` of filters ``omega[k, u, m, r]``."""
    gains = np.abs(np.einsum("kumr,lmr->kuml", omega.conj(), gamma)) ** 2
    own = np.einsum("kumu->kum", gains) * P[None]
    interf = np.einsum("kuml,lm,lk->kum", gains, P, delta_bar)
    noise = noise_var * np.sum(np.abs(omega) ** 2, axis=-1)
    return own / (interf + noise)


def achieved_sinr(gamma, omega, P, delta_bar, noise_var):
    """Frequency-averaged SINR ``[u, k]``, the left side of the convergence constraints."""
    return bin_sinr(gamma, omega, P, delta_bar, noise_var).mean(axis=-1).T


class _LogSumExp:
    """``ln sum_j C[j, m] exp(E[j] @ a)`` for all columns ``m`` at once."""

    def __init__(self, E, C):
        self.E = E
        self.C = C

    def value_grad(self, a):
        z = self.E @ a
        zmax = z.max()
        e = self.C * np.exp(z - zmax)[:, None]
        S = e.sum(axis=0)
        pi = e / S
        return zmax + np.log(S), (self.E.T @ pi).T, pi

    def weighted_hessian(self, pi, w):
        Ep = self.E.T @ pi  # (N, M)
        return (self.E.T * (pi @ w)) @ self.E - (Ep * w) @ Ep.T


def _papr_pieces(model, delta):
    N = model.block_len
    pairs = model.pairs
    E = np.vstack([np.eye(N), 0.5 * (np.eye(N)[pairs[:, 0]] + np.eye(N)[pairs[:, 1]])])
    diag = np.maximum(model.diag_coef, 0.0)
    lhs = np.vstack([np.repeat(diag[:, None], N, axis=1), 2.0 / N * model.eta_plus])
    rhs = np.vstack([np.full((N, N), delta), -2.0 / N * model.eta_minus])
    return _LogSumExp(E, lhs), _LogSumExp(E, rhs)


class ConvexSubproblem:
    """One SCA step in ``alpha = ln(P / noise_var)``, flattened user-major.

    Constraint rows, in order: the averaged-SINR rows per kept ``(u, k)``,
    positivity of the eliminated ``t`` per kept ``(k, u, n)``, the power
    floor per variable and, with PAPR models, one row per ``(u, m)``.
    Groups with ``xi <= 0`` hold trivially and are left out, as are bins
    where the filter sees no useful signal.
    """

    def __init__(self, gamma, omega, xi, delta_bar, noise_var, t_hat, papr_models=None, delta=None, alpha_hat=None):
        gamma = np.asarray(gamma, complex)
        omega = np.asarray(omega, complex)
        self.U, self.N = gamma.shape[:2]
        self.K = omega.shape[0]
        xi = np.asarray(xi, float)  # (U, K)
        delta_bar = np.asarray(delta_bar, float)

        gains = np.abs(np.einsum("kumr,lmr->kuml", omega.conj(), gamma)) ** 2
        scale = noise_var * np.sum(np.abs(omega) ** 2, axis=-1)  # (K, U, N)
        gains = gains / scale[..., None]
        own = np.einsum("kumu->kum", gains)
        self.B = gains * delta_bar.T[:, None, None, :]  # (K, U, N, l)

        self.group = (xi.T > 0)  # (K, U)
        self.valid = self.group[:, :, None] & (own > 0)
        self.log_own = np.log(np.where(own > 0, own, 1.0))
        self.xi = xi.T
        self.t_hat = np.where(self.valid, np.asarray(t_hat, float), 1.0)
        self.log_t_hat = np.log(self.t_hat)
        self.onehot = np.eye(self.U)[:, None, :]  # (u, 1, l)

        self.papr = []
        if papr_models is not None:
            delta = np.broadcast_to(np.asarray(delta, float), (self.U,))
            a_hat = np.asarray(alpha_hat, float).reshape(self.U, self.N)
            for u, model in enumerate(papr_models):
                if not np.isfinite(delta[u]):
                    continue
                lhs, rhs = _papr_pieces(model, delta[u])
                w_hat, g_hat, _ = rhs.value_grad(a_hat[u])
                self.papr.append((u, lhs, w_hat, g_hat, a_hat[u]))
        self._cache_key = None

    @property
    def size(self):
        return self.U * self.N

    # pieces shared by the constraint families
    def _sinr_terms(self, x):
        if self._cache_key is not None and np.array_equal(self._cache_key, x):
            return self._cache
        a = x.reshape(self.U, self.N)
        P = np.exp(a)
        terms = self.B * P.T[None, None]  # (K, U, N, l)
        D = terms.sum(axis=-1) + 1.0
        lhs = a[None] + self.log_own - np.log(D)
        pi = terms / D[..., None]
        grad = self.onehot - pi  # d LHS[k,u,n] / d alpha[l, n]
        self._cache_key, self._cache = x.copy(), (lhs, pi, grad)
        return self._cache

    def tau(self, x):
        """Eliminated SINR variables ``t[k, u, n]`` (zero where unused)."""
        lhs, _, _ = self._sinr_terms(x)
        return np.where(self.valid, self.t_hat * (1.0 + lhs - self.log_t_hat), 0.0)

    def objective(self, x):
        e = np.exp(x)
        return e.sum(), e, np.diag(e)

    def _rows_to_cols(self, G):
        # G[..., n, l] -> dense rows over alpha index l * N + n
        return np.swapaxes(G, -1, -2).reshape(G.shape[:-2] + (self.size,))

    def constraints(self, x):
        return self._evaluate(x, jac=True)

    def values(self, x):
        return self._evaluate(x, jac=False)[0]

    def _evaluate(self, x, jac):
        lhs, _, grad = self._sinr_terms(x)
        fs, Js = [], []
        kk, uu = np.nonzero(self.group)
        if kk.size:
            tau = self.tau(x)
            fs.append(self.N * self.xi[kk, uu] - tau[kk, uu].sum(axis=-1))
            if jac:
                w = np.where(self.valid, self.t_hat, 0.0)[..., None] * grad
                Js.append(-self._rows_to_cols(w[kk, uu]))
        kv, uv, nv = np.nonzero(self.valid)
        if kv.size:
            fs.append(self.log_t_hat[kv, uv, nv] - 1.0 - lhs[kv, uv, nv])
            if jac:
                J = np.zeros((kv.size, self.U, self.N))
                J[np.arange(kv.size), :, nv] = -grad[kv, uv, nv]
                Js.append(J.reshape(kv.size, self.size))
        fs.append(LOG_FLOOR - x)
        if jac:
            Js.append(-np.eye(self.size))
        a = x.reshape(self.U, self.N)
        for u, lse, w_hat, g_hat, a_hat in self.papr:
            val, g, _ = lse.value_grad(a[u])
            fs.append(val - w_hat - g_hat @ (a[u] - a_hat) - PAPR_SLACK)
            if jac:
                J = np.zeros((self.N, self.U, self.N))
                J[:, u, :] = g - g_hat
                Js.append(J.reshape(self.N, self.size))
        return np.concatenate(fs), (np.vstack(Js) if jac else None)

    def constraint_hessian(self, x, w):
        _, pi, _ = self._sinr_terms(x)
        weight = np.zeros((self.K, self.U, self.N))
        pos = 0
        kk, uu = np.nonzero(self.group)
        if kk.size:
            weight[kk, uu] += w[pos : pos + kk.size, None] * np.where(self.valid, self.t_hat, 0.0)[kk, uu]
            pos += kk.size
        kv, uv, nv = np.nonzero(self.valid)
        weight[kv, uv, nv] += w[pos : pos + kv.size]
        pos += kv.size + self.size
        # sum_{k,u} weight * (diag pi - pi pi^T) per bin, pi over l
        wp = weight[..., None] * pi
        blocks = np.einsum("kunl->nl", wp)[:, :, None] * np.eye(self.U) - np.einsum("kunl,kunj->nlj", wp, pi)
        H = np.zeros((self.U, self.N, self.U, self.N))
        n = np.arange(self.N)
        H[:, n, :, n] = blocks
        H = H.reshape(self.size, self.size)
        a = x.reshape(self.U, self.N)
        for u, lse, _, _, _ in self.papr:
            _, _, p = lse.value_grad(a[u])
            sl = slice(u * self.N, (u + 1) * self.N)
            H[sl, sl] += lse.weighted_hessian(p, w[pos : pos + self.N])
            pos += self.N
        return H

    def max_residual(self, x):
        f, _ = self.constraints(x)
        return float(np.max(f))


@dataclass
class SubproblemSolution:
    alpha: np.ndarray
    t: np.ndarray
    multipliers: np.ndarray
    gap: float
    newton_steps: int


def solve_subproblem(problem, x0, tol=1e-12, max_newton=200):
    """Barrier solve from a strictly feasible ``x0``; ``tol`` is the relative gap."""
    res = barrier_solve(problem, x0, rel_gap=tol, abs_gap=0.0, max_newton=max_newton)
    return SubproblemSolution(
        alpha=res.x, t=problem.tau(res.x), multipliers=res.multipliers, gap=res.gap, newton_steps=res.newton_steps
    )


def _strict_start(problem, x, max_shift=1.0):
    """``x`` pushed into the interior by a small uniform power increase.

    A common shift raises every log-SINR (the noise term does not scale) and
    leaves the PAPR rows unchanged, so this normally suffices; otherwise the
    phase-I problem is solved.
    """
    shift = 0.0
    step = 1e-7
    while shift <= max_shift:
        f, _ = problem.constraints(x + shift)
        if np.all(f < 0):
            return x + shift
        shift = step
        step *= 4.0
    return find_strictly_feasible(problem, x)


@dataclass
class ScaState:
    """Linearization points and the per-iteration record of one SCA run."""

    alpha_hat: np.ndarray
    t_hat: np.ndarray
    objective_trace: list = field(default_factory=list)
    residual_trace: list = field(default_factory=list)
    papr_trace: list = field(default_factory=list)
    status: str = "max_iters"
    newton_steps: int = 0

    @property
    def iterations(self):
        return len(self.objective_trace)


def _worst_papr_db(models, alpha):
    if models is None:
        return np.nan
    P = np.exp(alpha)
    worst = -np.inf
    for u, model in enumerate(models):
        s2 = np.abs(np.fft.fft(np.sqrt(P[u]) * np.fft.ifft(model.symbols))) ** 2
        worst = max(worst, 10 * np.log10(s2.max() / P[u].mean()))
    return float(worst)


def _run_sca(gamma, targets, omega, noise_var, alpha0, t0, papr_models, delta, max_iters, obj_tol, drift_tol, tol):
    U, N = gamma.shape[:2]
    state = ScaState(alpha_hat=np.asarray(alpha0, float).ravel().copy(), t_hat=np.asarray(t0, float).copy())
    linearized = np.any(targets.xi > 0) or papr_models is not None
    prev = np.exp(state.alpha_hat).sum()
    for _ in range(max_iters):
        problem = ConvexSubproblem(
            gamma, omega, targets.xi, targets.delta_bar, noise_var, state.t_hat,
            papr_models=papr_models, delta=delta, alpha_hat=state.alpha_hat,
        )
        x0 = _strict_start(problem, state.alpha_hat)
        try:
            sol = solve_subproblem(problem, x0, tol=tol)
        except NumericalError as err:
            warnings.warn(f"subproblem solve stopped early: {err}")
            sol = SubproblemSolution(x0, problem.tau(x0), None, np.inf, 0)
        state.newton_steps += sol.newton_steps
        x = sol.alpha
        obj = np.exp(x).sum()
        if obj > prev:
            # the previous point is feasible here too; never step uphill
            x, obj = state.alpha_hat, prev
        t_new = problem.tau(x)
        mask = problem.valid
        drift = 0.0
        if mask.any():
            drift = np.max(np.abs(t_new - state.t_hat)[mask]) / np.max(np.abs(state.t_hat[mask]))
        state.objective_trace.append(noise_var * obj)
        state.residual_trace.append(problem.max_residual(x))
        state.papr_trace.append(_worst_papr_db(papr_models, x.reshape(U, N)))
        rel = abs(prev - obj) / max(obj, np.finfo(float).tiny)
        state.alpha_hat = x
        state.t_hat = np.where(mask, t_new, bin_sinr(gamma, omega, np.exp(x.reshape(U, N)), targets.delta_bar, 1.0))
        prev = obj
        if not linearized or (rel < obj_tol and drift < drift_tol):
            state.status = "converged"
            break
    return state


def init_feasible(gamma, targets, noise_var, margin=1.05, cap=1e6):
    """Smallest uniform power meeting every SINR target with ``margin``.

    Receivers are recomputed at each trial power.  Returns ``(P, omega,
    t_hat)``; uniform power has 0 dB PAPR so the point also suits the PAPR
    constrained problem.
    """
    gamma = np.asarray(gamma, complex)
    U, N = gamma.shape[:2]
    xi = targets.xi

    def slack(p):
        P = np.full((U, N), p * noise_var)
        om = unit_receivers(gamma, P, targets.delta_bar, noise_var)
        zeta = achieved_sinr(gamma, om, P, targets.delta_bar, noise_var)
        ratio = np.where(xi > 0, zeta / np.where(xi > 0, xi, 1.0), np.inf)
        return ratio, P, om

    ratio, _, _ = slack(cap)
    if np.min(ratio) < margin:
        u, k = np.unravel_index(np.argmin(ratio), ratio.shape)
        raise InfeasibleError(
            f"SINR target of user {u} at grid point {k} unreachable below {cap:g} x noise", where=(int(u), int(k))
        )
    lo, hi = 0.0, 1.0
    while np.min(slack(hi)[0]) < margin:
        lo, hi = hi, min(hi * 4.0, cap)
    for _ in range(60):
        if hi - lo <= 1e-6 * hi:
            break
        mid = 0.5 * (lo + hi)
        if np.min(slack(mid)[0]) >= margin:
            hi = mid
        else:
            lo = mid
    _, P, om = slack(hi)
    return P, om, bin_sinr(gamma, om, P, targets.delta_bar, noise_var)


def sca_ccpa(gamma, targets, omega, noise_var, P0, t0, max_iters=50, obj_tol=1e-5, drift_tol=1e-4, tol=1e-12):
    """Power minimisation for fixed receivers ``omega[k, u, m, r]`` (no PAPR)."""
    alpha0 = np.log(np.maximum(np.asarray(P0, float) / noise_var, FLOOR))
    return _run_sca(gamma, targets, omega, noise_var, alpha0, t0, None, None, max_iters, obj_tol, drift_tol, tol)


def sca_ccpa_papr(gamma, targets, omega, noise_var, P0, t0, papr_models, delta, max_iters=50, obj_tol=1e-5, drift_tol=1e-4, tol=1e-12):
    """As :func:`sca_ccpa` with a PAPR bound ``delta`` (linear) per user block."""
    alpha0 = np.log(np.maximum(np.asarray(P0, float) / noise_var, FLOOR))
    return _run_sca(
        gamma, targets, omega, noise_var, alpha0, t0, papr_models, delta, max_iters, obj_tol, drift_tol, tol
    )


@dataclass
class Allocation:
    """Result of the alternating transmit/receive optimisation."""

    P: np.ndarray
    omega: np.ndarray
    power_trace: list
    sca_states: list
    status: str

    @property
    def total_power(self):
        return float(self.P.sum())

    @property
    def sca_iterations(self):
        return sum(s.iterations for s in self.sca_states)


def alternating_optimize(
    gamma, targets, noise_var, symbols=None, delta=None, P0=None, max_rounds=20, power_tol=1e-4, **sca_kw
):
    """Alternate SCA power steps and MMSE receiver updates.

    With ``symbols[u]`` and ``delta`` the PAPR constrained algorithm is used.
    ``P0`` warm-starts from a feasible allocation instead of the uniform one.
    """
    gamma = np.asarray(gamma, complex)
    models = None
    if delta is not None and symbols is not None:
        models = [build_papr_model(s) for s in symbols]
    if P0 is None:
        P, omega, t_hat = init_feasible(gamma, targets, noise_var)
    else:
        P = check_power(P0, gamma.shape[:2])
        omega = unit_receivers(gamma, P, targets.delta_bar, noise_var)
        t_hat = bin_sinr(gamma, omega, P, targets.delta_bar, noise_var)
    states, trace = [], []
    status = "max_rounds"
    for rnd in range(max_rounds + 1):
        if models is None:
            st = sca_ccpa(gamma, targets, omega, noise_var, P, t_hat, **sca_kw)
        else:
            st = sca_ccpa_papr(gamma, targets, omega, noise_var, P, t_hat, models, delta, **sca_kw)
        states.append(st)
        P_new = noise_var * np.exp(st.alpha_hat.reshape(P.shape))
        trace.append(float(P_new.sum()))
        change = abs(P.sum() - P_new.sum()) / P_new.sum()
        P = P_new
        omega_new = unit_receivers(gamma, P, targets.delta_bar, noise_var)
        # unchanged filter directions leave the next power step nothing to gain
        turned = np.max(1.0 - np.abs(np.sum(omega.conj() * omega_new, axis=-1)) / np.prod(
            [np.linalg.norm(w, axis=-1) for w in (omega, omega_new)], axis=0))
        omega = omega_new
        t_hat = bin_sinr(gamma, omega, P, targets.delta_bar, noise_var)
        if (rnd > 0 and change < power_tol) or turned < 1e-12:
            status = "converged"
            break
    if status != "converged":
        warnings.warn("alternating optimisation hit the round limit")
    return Allocation(P=P, omega=omega, power_trace=trace, sca_states=states, status=status)


def write_solver_trace(states, path):
    """``outer_iter,objective,max_constraint_residual,papr_worst_db`` across SCA runs."""
    with open(path, "w") as fh:
        fh.write("outer_iter,objective,max_constraint_residual,papr_worst_db\n")
        it = 0
        for st in states:
            for obj, res, pk in zip(st.objective_trace, st.residual_trace, st.papr_trace):
                it += 1
                fh.write(f"{it},{obj:.12g},{res:.6e},{pk:.6f}\n")
