import numpy as np
import pytest
from scipy.optimize import minimize

from papralloc._validation import InfeasibleError
from papralloc.solver import barrier_solve, find_strictly_feasible


class BoxQP:
    """``min 1/2 x'Qx + c'x`` subject to ``A x <= b``."""

    def __init__(self, Q, c, A, b):
        self.Q, self.c, self.A, self.b = Q, c, A, b

    def objective(self, x):
        return 0.5 * x @ self.Q @ x + self.c @ x, self.Q @ x + self.c, self.Q

    def constraints(self, x):
        return self.A @ x - self.b, self.A

    def constraint_hessian(self, x, w):
        return np.zeros((x.size, x.size))


class Ball:
    """``min c'x`` over ``|x|^2 <= 1``; optimum ``-c/|c|``."""

    def __init__(self, c):
        self.c = c

    def objective(self, x):
        return self.c @ x, self.c, np.zeros((x.size, x.size))

    def constraints(self, x):
        return np.array([x @ x - 1.0]), 2 * x[None, :]

    def constraint_hessian(self, x, w):
        return 2 * w[0] * np.eye(x.size)


def random_qp(rng, n=5, m=8):
    M = rng.normal(size=(n, n))
    A = rng.normal(size=(m, n))
    return BoxQP(M @ M.T + 0.1 * np.eye(n), rng.normal(size=n), A, np.abs(rng.normal(size=m)) + 0.1)


class TestBarrier:
    @pytest.mark.parametrize("seed", range(5))
    def test_qp_against_slsqp(self, seed):
        rng = np.random.default_rng(seed)
        p = random_qp(rng)
        res = barrier_solve(p, np.zeros(5))
        ref = minimize(
            lambda x: p.objective(x)[0], np.zeros(5), jac=lambda x: p.objective(x)[1], method="SLSQP",
            constraints={"type": "ineq", "fun": lambda x: p.b - p.A @ x, "jac": lambda x: -p.A},
            options={"ftol": 1e-14, "maxiter": 500},
        )
        assert res.objective == pytest.approx(ref.fun, abs=1e-8)
        assert np.all(p.constraints(res.x)[0] <= 0)

    def test_kkt_multipliers(self, rng):
        p = random_qp(rng)
        res = barrier_solve(p, np.zeros(5))
        assert res.dual_residual < 1e-6
        assert np.all(res.multipliers > 0)
        assert res.gap <= 1e-11 * abs(res.objective) + 1e-12

    def test_curved_constraint(self):
        c = np.array([3.0, -4.0])
        res = barrier_solve(Ball(c), np.zeros(2))
        np.testing.assert_allclose(res.x, -c / 5, atol=1e-6)
        assert res.objective == pytest.approx(-5.0, abs=1e-9)

    def test_rejects_infeasible_start(self, rng):
        with pytest.raises(InfeasibleError):
            barrier_solve(Ball(np.ones(2)), np.array([2.0, 0.0]))


class TestPhaseOne:
    def test_finds_interior(self, rng):
        p = random_qp(rng)
        x = find_strictly_feasible(p, 10 * np.ones(5))
        assert np.all(p.constraints(x)[0] < 0)

    def test_empty_set(self):
        A = np.array([[1.0], [-1.0]])
        p = BoxQP(np.eye(1), np.zeros(1), A, np.array([-1.0, -1.0]))  # x <= -1 and x >= 1
        with pytest.raises(InfeasibleError):
            find_strictly_feasible(p, np.zeros(1))
