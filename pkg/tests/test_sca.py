import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from papralloc._validation import InfeasibleError
from papralloc.exitlab import ConvergenceTargets, build_targets
from papralloc.papr import build_papr_model, papr_db
from papralloc.sca import (
    FLOOR,
    ConvexSubproblem,
    achieved_sinr,
    alternating_optimize,
    init_feasible,
    sca_ccpa,
    sca_ccpa_papr,
    unit_receivers,
    write_solver_trace,
)
from papralloc.sigmodel import rayleigh_channel


def manual_targets(xi, dbar=1.0):
    xi = np.atleast_2d(np.asarray(xi, float))
    z = np.zeros_like(xi)
    return ConvergenceTargets(grid=z, required=z, sigma_ring=z, delta_bar=np.full_like(xi, dbar), xi=xi, eps=z)


def two_bin_oracle(g, xi):
    """Dense search over the first bin power, the second solved exactly (unit noise)."""
    f = lambda p, gg: gg * p / (gg * p + 1.0)

    def total(p1):
        need = 2 * xi - f(p1, g[0])
        if need >= 1:
            return np.inf
        return p1 + (max(need, 0.0) / (g[1] * (1 - need)))

    hi = 20 * xi / (g[0] * (1 - min(2 * xi, 0.999)))
    grid = np.linspace(0, hi, 20001)
    vals = np.array([total(p) for p in grid])
    i = int(np.argmin(vals))
    r = minimize_scalar(total, bounds=(grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]), method="bounded",
                        options={"xatol": 1e-12})
    return min(r.fun, vals[i])


@pytest.fixture(scope="module")
def small_targets(ra_curve):
    return build_targets(ra_curve, 4, [0.01, 0.01], 0.9998, ie_hat_target=0.7892)


@pytest.fixture(scope="module")
def instance(small_targets):
    ch = rayleigh_channel(2)
    P, om, th = init_feasible(ch.gamma, small_targets, 1.0)
    return ch, P, om, th


@pytest.fixture(scope="module")
def models():
    from papralloc.sigmodel import random_qpsk_block

    return [build_papr_model(random_qpsk_block(40 + u).symbols) for u in range(2)]


class TestSubproblem:
    def test_derivatives(self, instance, small_targets, models, rng):
        ch, P, om, th = instance
        a_hat = np.log(P).ravel()
        p = ConvexSubproblem(ch.gamma, om, small_targets.xi, small_targets.delta_bar, 1.0, th,
                             papr_models=models, delta=2.0, alpha_hat=a_hat)
        x = a_hat + rng.normal(0, 0.3, a_hat.size)
        f, Jac = p.constraints(x)
        np.testing.assert_allclose(p.values(x), f)
        h = 1e-6
        fd = np.stack([(p.constraints(x + h * e)[0] - p.constraints(x - h * e)[0]) / (2 * h) for e in np.eye(x.size)], 1)
        np.testing.assert_allclose(Jac, fd, atol=1e-6 * max(1, np.abs(Jac).max()))
        w = rng.uniform(0.1, 1, f.size)
        H = p.constraint_hessian(x, w)
        fdH = np.stack([(p.constraints(x + h * e)[1] - p.constraints(x - h * e)[1]).T @ w / (2 * h) for e in np.eye(x.size)], 1)
        np.testing.assert_allclose(H, fdH, atol=1e-5 * max(1, np.abs(H).max()))

    def test_zero_targets_hit_floor(self, channel):
        T = manual_targets(np.zeros((2, 3)), 0.5)
        P, om = np.ones((2, 8)), unit_receivers(channel.gamma, np.ones((2, 8)), T.delta_bar, 1.0)
        st = sca_ccpa(channel.gamma, T, om, 0.7, P, np.ones((3, 2, 8)))
        assert st.iterations == 1 and st.status == "converged"
        assert st.objective_trace[-1] == pytest.approx(2 * 8 * FLOOR * 0.7, rel=1e-6)

    @pytest.mark.parametrize("g", [(1.0, 1.0), (1.0, 0.3), (2.0, 0.2)])
    @pytest.mark.parametrize("xi", [0.3, 0.6])
    def test_two_bin_oracle(self, g, xi):
        gamma = np.sqrt(np.array(g))[None, :, None].astype(complex)
        T = manual_targets([[xi]])
        P, om, th = init_feasible(gamma, T, 1.0)
        st = sca_ccpa(gamma, T, om, 1.0, P, th)
        assert st.objective_trace[-1] == pytest.approx(two_bin_oracle(g, xi), rel=1e-4)


class TestAlgorithms:
    def test_ccpa_contract(self, instance, small_targets):
        ch, P, om, th = instance
        st = sca_ccpa(ch.gamma, small_targets, om, 1.0, P, th)
        assert np.all(np.diff(st.objective_trace) <= 1e-9 * st.objective_trace[0])
        assert st.iterations <= 50
        Pn = np.exp(st.alpha_hat).reshape(2, 8)
        assert np.all(achieved_sinr(ch.gamma, om, Pn, small_targets.delta_bar, 1.0) >= small_targets.xi - 1e-6)
        assert st.objective_trace[-1] < P.sum()
        assert max(st.residual_trace) <= 1e-6

    @pytest.mark.parametrize("delta_db", [0.0, 3.0])
    def test_papr_contract(self, instance, small_targets, models, delta_db):
        ch, P, om, th = instance
        st = sca_ccpa_papr(ch.gamma, small_targets, om, 1.0, P, th, models, 10 ** (delta_db / 10))
        Pn = np.exp(st.alpha_hat).reshape(2, 8)
        for u in range(2):
            assert papr_db(models[u], Pn[u]) <= delta_db + 1e-6
        assert np.all(np.diff(st.objective_trace) <= 1e-9 * st.objective_trace[0])
        assert np.all(achieved_sinr(ch.gamma, om, Pn, small_targets.delta_bar, 1.0) >= small_targets.xi - 1e-6)

    def test_tighter_bound_costs_more(self, instance, small_targets, models):
        ch, P, om, th = instance
        free = sca_ccpa(ch.gamma, small_targets, om, 1.0, P, th).objective_trace[-1]
        loose = sca_ccpa_papr(ch.gamma, small_targets, om, 1.0, P, th, models, 10**0.6).objective_trace[-1]
        tight = sca_ccpa_papr(ch.gamma, small_targets, om, 1.0, P, th, models, 10**0.3).objective_trace[-1]
        assert free <= loose * (1 + 1e-6) and loose <= tight * (1 + 1e-6)

    def test_solver_trace_csv(self, instance, small_targets, tmp_path):
        ch, P, om, th = instance
        st = sca_ccpa(ch.gamma, small_targets, om, 1.0, P, th, max_iters=3)
        write_solver_trace([st, st], tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "outer_iter,objective,max_constraint_residual,papr_worst_db"
        assert len(lines) == 1 + 2 * st.iterations
        assert lines[-1].startswith(f"{2 * st.iterations},")


class TestInitFeasible:
    def test_margin_and_minimal(self, channel, small_targets):
        P, om, th = init_feasible(channel.gamma, small_targets, 0.5)
        ratio = achieved_sinr(channel.gamma, om, P, small_targets.delta_bar, 0.5) / small_targets.xi
        assert ratio.min() >= 1.05
        assert ratio.min() < 1.05 * (1 + 1e-4)
        np.testing.assert_allclose(P, P[0, 0])

    def test_deterministic(self, channel, small_targets):
        a, b = init_feasible(channel.gamma, small_targets, 0.5), init_feasible(channel.gamma, small_targets, 0.5)
        np.testing.assert_array_equal(a[0], b[0])

    def test_unreachable_target(self):
        # a single user cannot exceed SINR 1 with full residual interference
        gamma = np.ones((1, 8, 1), complex)
        with pytest.raises(InfeasibleError) as err:
            init_feasible(gamma, manual_targets([[0.5, 1.2]]), 1.0)
        assert err.value.where == (0, 1)


class TestAlternating:
    def test_single_antenna_single_round(self):
        gamma = (np.linspace(0.5, 1.5, 8) * np.exp(1j * np.arange(8)))[None, :, None]
        alloc = alternating_optimize(gamma, manual_targets([[0.2, 0.5]], 0.6), 1.0)
        assert len(alloc.sca_states) == 1 and alloc.status == "converged"

    def test_power_non_increasing(self, channel, small_targets, models):
        from papralloc.sigmodel import random_qpsk_block

        blocks = [random_qpsk_block(40 + u).symbols for u in range(2)]
        alloc = alternating_optimize(channel.gamma, small_targets, 1.0, symbols=blocks, delta=10**0.3)
        tr = np.array(alloc.power_trace)
        assert np.all(np.diff(tr) <= 1e-9 * tr[0])
        for st in alloc.sca_states:
            assert max(st.papr_trace) <= 3.0 + 1e-6
        assert alloc.status == "converged"
