import filecmp

import numpy as np
import pytest

from papralloc._validation import DomainError
from papralloc.cli import main
from papralloc.exitlab import identity_curve, simulate_trajectory
from papralloc.harness import (
    ExperimentConfig,
    clip_waveform,
    draw_realization,
    emit_exit_chart_data,
    evaluate_clipping,
    run_experiment,
    snr,
    write_outputs,
)
from papralloc.sigmodel import transmit_waveform

QUICK = "num_realizations = 1\ngrid_size = 3\nnum_blocks = 300\nmax_rounds = 4\nsca_max_iters = 15\n"


@pytest.fixture
def quick_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# quick run\n" + QUICK + f"out_dir = {tmp_path / 'out'}\n")
    return path


class TestConfig:
    def test_from_file(self, tmp_path):
        p = tmp_path / "c.cfg"
        p.write_text("strategy = ccpa_papr  # bounds below\ndelta_db = 6, 3\nnum_users = 3\nnoise_var_db = -3\n")
        c = ExperimentConfig.from_file(p)
        assert c.strategy == "ccpa_papr" and c.system.num_users == 3
        assert c.delta_db == (6.0, 3.0)
        np.testing.assert_allclose(c.delta, [10**0.6, 10**0.3])
        assert c.system.noise_var == pytest.approx(10**-0.3)

    def test_overrides_win(self, quick_config):
        c = ExperimentConfig.from_file(quick_config, strategy="ccpa_clip", delta_db="4.5", seed=9)
        assert (c.strategy, c.delta_db, c.seed) == ("ccpa_clip", (4.5,), 9)

    @pytest.mark.parametrize("text", ["colour = red\n", "strategy = fastest\n", "delta_db = -1\n", "noise\n"])
    def test_rejects(self, tmp_path, text):
        (tmp_path / "bad.cfg").write_text(text)
        with pytest.raises((ValueError, DomainError)):
            ExperimentConfig.from_file(tmp_path / "bad.cfg")


class TestClipping:
    def test_under_threshold_identity(self, rng):
        s = rng.normal(size=8) + 1j * rng.normal(size=8)
        np.testing.assert_array_equal(clip_waveform(s, 40.0, np.mean(np.abs(s) ** 2)), s)

    def test_uniform_power_zero_db(self, blocks):
        s = transmit_waveform(np.full(8, 2.0), blocks[0])
        np.testing.assert_allclose(clip_waveform(s, 0.0, 2.0), s)

    def test_bounded_and_phase_kept(self, rng):
        for _ in range(50):
            s = (rng.normal(size=8) + 1j * rng.normal(size=8)) * rng.exponential(size=8)
            avg = np.mean(np.abs(s) ** 2)
            c = clip_waveform(s, 3.0, avg)
            assert 10 * np.log10(np.max(np.abs(c) ** 2) / avg) <= 3.0 + 1e-9
            np.testing.assert_allclose(np.angle(c), np.angle(s), atol=1e-12)

    def test_batched_per_user_average(self, rng):
        s = rng.normal(size=(5, 2, 8)) + 0j
        avg = np.array([1.0, 4.0])
        c = clip_waveform(s, 0.0, avg)
        assert np.all(np.abs(c[:, 1]) <= 2.0 + 1e-12) and np.all(np.abs(c[:, 0]) <= 1.0 + 1e-12)


class TestPlumbing:
    def test_snr(self):
        assert snr(np.full((2, 8), 3.0), 2, 0.5) == pytest.approx(2 * 8 * 3 / (2 * 8 * 0.5))

    def test_realizations_deterministic(self):
        c = ExperimentConfig()
        a, b, other = draw_realization(c, 3), draw_realization(c, 3), draw_realization(c, 4)
        np.testing.assert_array_equal(a.channel.taps, b.channel.taps)
        np.testing.assert_array_equal(a.symbols[1], b.symbols[1])
        assert not np.array_equal(a.channel.taps, other.channel.taps)


class TestExitChart:
    def test_identity_diagonals(self, tmp_path):
        tr = simulate_trajectory(lambda ia: np.asarray(ia) * 0 + 0.6, identity_curve())
        grid = np.linspace(0, 1, 5)
        emit_exit_chart_data([tr], identity_curve(), tmp_path / "e.csv", equalizer_samples=(grid, np.stack([grid] * 2, 1)),
                             curve_points=5)
        rows = np.genfromtxt(tmp_path / "e.csv", delimiter=",", names=True, dtype=None, encoding=None)
        for series in ("decoder", "equalizer"):
            sel = rows[rows["series"] == series]
            np.testing.assert_allclose(sel["x"], sel["y"])

    def test_row_count_and_bytes(self, tmp_path):
        tr = simulate_trajectory(lambda ia: 0.3 + 0.5 * np.asarray(ia), identity_curve(), max_iters=7, start=np.zeros(2))
        for name in ("a.csv", "b.csv"):
            emit_exit_chart_data(tr, identity_curve(), tmp_path / name, curve_points=11)
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert len(lines) - 1 == 2 * (11 + 2 * len(tr.points))
        assert filecmp.cmp(tmp_path / "a.csv", tmp_path / "b.csv", shallow=False)


class TestRuns:
    def test_ccpa_report(self, quick_config, tmp_path):
        c = ExperimentConfig.from_file(quick_config)
        rep = run_experiment(c)
        (row,) = rep.rows
        assert row["strategy"] == "ccpa" and row["min_sinr_margin"] >= -1e-6
        assert row["snr"] == pytest.approx(snr(np.array([[row[f"P_{u}_{m}"] for m in range(8)] for u in range(2)]), 2, 1.0))
        out = write_outputs(c, rep)
        head = (out / "solver_trace.csv").read_text().splitlines()[0]
        assert head == "outer_iter,objective,max_constraint_residual,papr_worst_db"
        assert (out / "report.csv").read_text().startswith("realization,strategy,delta_db,status")
        assert (out / "exit_chart.csv").read_text().startswith("series,user,index,x,y")

    def test_papr_strategy_meets_bound(self, quick_config):
        rep = run_experiment(ExperimentConfig.from_file(quick_config, strategy="ccpa_papr", delta_db="3"))
        (row,) = rep.rows
        assert max(row["papr_db_0"], row["papr_db_1"]) <= 3.0 + 1e-6

    def test_unbounded_clip_is_unclipped(self, quick_config):
        rep = evaluate_clipping(ExperimentConfig.from_file(quick_config, delta_db="300"))
        ref, clipped = rep.rows
        assert np.isnan(ref["delta_db"]) and clipped["delta_db"] == 300.0
        assert (ref["ie_hat_0"], ref["ie_hat_1"]) == (clipped["ie_hat_0"], clipped["ie_hat_1"])


class TestCli:
    def test_success_and_reproducible(self, quick_config, tmp_path):
        assert main(["run", "--config", str(quick_config), "--out", str(tmp_path / "a")]) == 0
        assert main(["run", "--config", str(quick_config), "--out", str(tmp_path / "b")]) == 0
        for name in ("report.csv", "exit_chart.csv", "solver_trace.csv"):
            assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)

    def test_infeasible_exit_code(self, tmp_path):
        cfg = tmp_path / "hard.cfg"
        cfg.write_text(QUICK + "num_users = 4\nnum_rx = 1\ngap = 0.2\n")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
        assert "infeasible" in (tmp_path / "o" / "report.csv").read_text()

    def test_error_exit_code(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 1
        assert "error" in capsys.readouterr().err
