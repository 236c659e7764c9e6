"""Primal log-barrier interior-point method with Newton centering.

A problem exposes

* ``objective(x) -> (f0, grad, hess)``
* ``constraints(x) -> (f, jac)`` for inequality constraints ``f(x) <= 0``
* ``constraint_hessian(x, w) -> sum_i w_i * hess f_i(x)``
* optionally ``values(x) -> f``, used by the line search to skip Jacobians

and is solved from a strictly feasible point; :func:`find_strictly_feasible`
runs the standard phase-I problem when no such point is at hand.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ._validation import InfeasibleError


class NumericalError(RuntimeError):
    def __init__(self, message, iterate=None):
        super().__init__(message)
        self.iterate = iterate


@dataclass
class BarrierResult:
    x: np.ndarray
    objective: float
    multipliers: np.ndarray
    gap: float
    decrement: float
    dual_residual: float
    newton_steps: int
    stages: int
    history: list = field(default_factory=list)


def _newton_center(problem, x, t, max_newton, decrement_tol, alpha=0.25, beta=0.5, stop=None):
    """Minimise ``t f0 - sum log(-f_i)`` starting at strictly feasible ``x``.

    Returns the centred point, the number of Newton steps and the last
    squared Newton decrement.
    """
    steps = 0
    lam2 = np.inf
    values = getattr(problem, "values", None) or (lambda z: problem.constraints(z)[0])
    f0, g0, H0 = problem.objective(x)
    f, Jac = problem.constraints(x)
    phi = t * f0 - np.sum(np.log(-f))
    while steps < max_newton:
        inv = 1.0 / -f
        grad = t * g0 + Jac.T @ inv
        hess = t * H0 + (Jac.T * inv**2) @ Jac + problem.constraint_hessian(x, inv)
        try:
            dx = -_cho_solve(_cho(hess), grad)
        except np.linalg.LinAlgError:
            dx = -np.linalg.lstsq(hess, grad, rcond=None)[0]
        lam2 = float(-grad @ dx)
        if lam2 < 0:
            raise NumericalError("Newton direction is not a descent direction", iterate=x.copy())
        # second test: predicted decrease below the resolution of phi
        if lam2 / 2.0 <= decrement_tol or lam2 / 2.0 <= 1e3 * np.finfo(float).eps * abs(phi):
            break
        step = 1.0
        while True:
            xn = x + step * dx
            fn = values(xn)
            if np.all(fn < 0) and np.all(np.isfinite(fn)):
                f0n, g0n, H0n = problem.objective(xn)
                phin = t * f0n - np.sum(np.log(-fn))
                if np.isfinite(phin) and phin <= phi - alpha * step * lam2:
                    break
            step *= beta
            if step < 1e-14:
                # no further progress possible at this precision
                return x, steps, lam2
        x, f0, g0, H0, phi = xn, f0n, g0n, H0n, phin
        f, Jac = problem.constraints(x)
        steps += 1
        if stop is not None and stop(x):
            break
    return x, steps, lam2


def _cho(a):
    return cho_factor(a, lower=False, check_finite=False)


def _cho_solve(c, b):
    return cho_solve(c, b, check_finite=False)


def barrier_solve(
    problem,
    x0,
    rel_gap=1e-11,
    abs_gap=1e-12,
    mu=10.0,
    t0=None,
    max_newton=200,
    decrement_tol=1e-10,
    max_stages=60,
):
    """Solve from a strictly feasible ``x0``.

    Stops once the duality-gap bound ``m / t`` falls below
    ``max(abs_gap, rel_gap * |f0|)``.
    """
    x = np.asarray(x0, float).copy()
    f, _ = problem.constraints(x)
    if not np.all(f < 0):
        raise InfeasibleError("barrier_solve needs a strictly feasible start")
    m = f.size
    f0 = problem.objective(x)[0]
    if t0 is None:
        t = _initial_t(f0, m)
    else:
        t = t0
    total = 0
    history = []
    # at large t the slacks lose their relative precision, so keep the
    # stage whose multipliers best satisfy stationarity
    lam, dual_res = None, np.inf
    for stage in range(1, max_stages + 1):
        x, steps, lam2 = _newton_center(problem, x, t, max_newton, decrement_tol)
        total += steps
        f0, g0, _ = problem.objective(x)
        f, Jac = problem.constraints(x)
        lam_t = 1.0 / (-t * f)
        res = float(np.linalg.norm(g0 + Jac.T @ lam_t))
        if res <= dual_res:
            lam, dual_res = lam_t, res
        history.append((t, f0, steps))
        if m / t <= max(abs_gap, rel_gap * abs(f0)):
            break
        t *= mu
    return BarrierResult(
        x=x, objective=float(f0), multipliers=lam, gap=m / t, decrement=float(lam2), dual_residual=dual_res,
        newton_steps=total, stages=stage, history=history,
    )


def _initial_t(f0, m):
    """``m / |f0|``: the duality-gap bound starts near the objective scale."""
    return m / abs(f0) if f0 != 0 else 1.0


class _PhaseOne:
    """``min s  s.t.  f_i(x) - s <= 0,  s >= floor`` over ``(x, s)``."""

    def __init__(self, problem, floor):
        self.p = problem
        self.floor = floor

    def objective(self, z):
        g = np.zeros(z.size)
        g[-1] = 1.0
        return z[-1], g, np.zeros((z.size, z.size))

    def constraints(self, z):
        f, J = self.p.constraints(z[:-1])
        jac = np.hstack([J, -np.ones((f.size, 1))])
        last = np.zeros((1, z.size))
        last[0, -1] = -1.0
        return np.append(f - z[-1], self.floor - z[-1]), np.vstack([jac, last])

    def constraint_hessian(self, z, w):
        H = np.zeros((z.size, z.size))
        H[:-1, :-1] = self.p.constraint_hessian(z[:-1], w)
        return H


def find_strictly_feasible(problem, x0, margin=1e-9, max_rounds=40):
    """Return a point with ``max f_i < 0`` or raise :class:`InfeasibleError`."""
    x0 = np.asarray(x0, float)
    f, _ = problem.constraints(x0)
    if np.all(f < 0):
        return x0
    scale = max(1.0, float(np.max(np.abs(f))))
    ph = _PhaseOne(problem, floor=-scale)
    z = np.append(x0, np.max(f) + 0.1 * scale)
    t = 1.0
    feasible = lambda z: np.max(problem.constraints(z[:-1])[0]) < -margin * scale
    for _ in range(max_rounds):
        z, _, _ = _newton_center(ph, z, t, 200, 1e-12, stop=feasible)
        f, _ = problem.constraints(z[:-1])
        if feasible(z):
            return z[:-1]
        t *= 10.0
        if (f.size + 1) / t < 1e-12 * scale:
            break
    raise InfeasibleError(f"no strictly feasible point (min max f = {np.max(f):.3e})")
