"""Experiment orchestration: per-realization strategy runs, the clipping
baseline, and CSV emission for external plotting."""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
import warnings

import numpy as np

from ._validation import DomainError, InfeasibleError
from .equalizer import AnalyticEqualizer, MonteCarloEqualizer
from .exitlab import build_targets, load_decoder_curve, ra_rate13_curve, simulate_trajectory
from .jfunc import bep_of_targets
from .papr import build_papr_model, papr_db
from .sca import achieved_sinr, alternating_optimize, write_solver_trace
from .sigmodel import SystemConfig, random_qpsk_block, rayleigh_channel

STRATEGIES = ("ccpa", "ccpa_papr", "ccpa_clip")
DEFAULT_GAP = 0.01


def db_to_lin(x):
    return 10.0 ** (np.asarray(x, float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


@dataclass
class ExperimentConfig:
    """Everything one batch run needs.

    ``delta_db`` lists the PAPR bounds (and, for ``ccpa_clip``, the clipping
    thresholds) in dB; ``delta`` holds the same values in linear scale and is
    filled in once, here.
    """

    system: SystemConfig = field(default_factory=lambda: SystemConfig(gap=DEFAULT_GAP))
    strategy: str = "ccpa"
    delta_db: tuple = (6.0, 3.0)
    ie_ring_target: float = 0.9998
    ie_hat_target: float = 0.7892
    num_realizations: int = 20
    num_blocks: int = 8000
    decoder_curve: str = None
    out_dir: str = "out"
    seed: int = 0
    max_rounds: int = 20
    sca_max_iters: int = 50
    workers: int = 1
    delta: tuple = field(init=False)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise DomainError(f"unknown strategy {self.strategy!r}; choose from {', '.join(STRATEGIES)}")
        self.delta_db = tuple(float(d) for d in np.atleast_1d(self.delta_db))
        if self.strategy != "ccpa" and not self.delta_db:
            raise DomainError(f"strategy {self.strategy} needs at least one delta_db value")
        if any(d < 0 for d in self.delta_db):
            raise DomainError("delta_db must be >= 0 dB")
        self.delta = tuple(float(d) for d in db_to_lin(self.delta_db))
        if self.num_realizations < 1 or self.num_blocks < 1:
            raise DomainError("num_realizations and num_blocks must be positive")

    # flat ``key = value`` files ------------------------------------------
    _SYSTEM_KEYS = {"num_users", "num_rx", "block_len", "channel_len", "noise_var", "grid_size", "gap"}

    @classmethod
    def from_file(cls, path, **overrides):
        """Read a flat ``key = value`` file; ``#`` starts a comment.

        System keys: num_users, num_rx, block_len, channel_len, noise_var
        (or noise_var_db), grid_size, gap.  Run keys: strategy, delta_db
        (comma separated), ie_ring_target, ie_hat_target, num_realizations,
        num_blocks, decoder_curve, out_dir, seed, max_rounds, sca_max_iters,
        workers.  Keyword ``overrides`` win over the file.
        """
        raw = {}
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key] = value
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(raw)

    @classmethod
    def from_mapping(cls, raw):
        raw = dict(raw)
        sys_kw = {"gap": DEFAULT_GAP}
        if "noise_var_db" in raw:
            sys_kw["noise_var"] = float(db_to_lin(float(raw.pop("noise_var_db"))))
        for key in list(raw):
            if key in cls._SYSTEM_KEYS:
                conv = float if key in ("noise_var", "gap") else int
                sys_kw[key] = conv(raw.pop(key))
        kw = {}
        types = {f.name: f.type for f in fields(cls) if f.init}
        for key, value in raw.items():
            if key not in types or key == "system":
                raise ValueError(f"unknown configuration key {key!r}")
            if key == "delta_db":
                if isinstance(value, str):
                    value = [float(v) for v in value.replace(",", " ").split()]
            elif types[key] in ("int", int):
                value = int(value)
            elif types[key] in ("float", float):
                value = float(value)
            kw[key] = value
        return cls(system=SystemConfig(**sys_kw), **kw)

    def curve(self):
        return ra_rate13_curve() if self.decoder_curve is None else load_decoder_curve(self.decoder_curve)

    def targets(self):
        s = self.system
        return build_targets(self.curve(), s.grid_size, s.gap, self.ie_ring_target, ie_hat_target=self.ie_hat_target)


def clip_waveform(s, threshold_db, avg_power):
    """Hard-limit ``|s_m|^2`` to ``thr * avg_power`` keeping the phase.

    Broadcasts over leading axes; ``avg_power`` lines up with ``s[..., :-1]``.
    """
    s = np.asarray(s, complex)
    lim = np.sqrt(db_to_lin(threshold_db) * np.asarray(avg_power, float))[..., None]
    mag = np.abs(s)
    over = mag > lim
    return np.where(over, s * (lim / np.where(over, mag, 1.0)), s)


def _clipper(threshold_db):
    return lambda s, avg: clip_waveform(s, threshold_db, avg)


@dataclass
class Realization:
    """Draws for one channel realization."""

    index: int
    channel: object
    symbols: list


def draw_realization(config, index):
    s = config.system
    ss = np.random.SeedSequence([config.seed, index])
    ch_seed, blk_seed = ss.spawn(2)
    channel = rayleigh_channel(
        int(ch_seed.generate_state(1)[0]), s.num_users, s.num_rx, s.channel_len, s.block_len
    )
    blk = blk_seed.generate_state(s.num_users)
    symbols = [random_qpsk_block(int(b), s.block_len).symbols for b in blk]
    return Realization(index, channel, symbols)


def snr(P, num_rx, noise_var):
    """``tr{P} / (N_R N_F noise_var)``."""
    P = np.asarray(P, float)
    return float(P.sum() / (num_rx * P.shape[-1] * noise_var))


def _row(config, real, strategy, delta_db, alloc, targets, traj, status):
    s = config.system
    U, N = s.num_users, s.block_len
    row = {"realization": real.index, "strategy": strategy, "delta_db": delta_db, "status": status}
    if alloc is None:
        return row
    P = alloc.P
    row["total_power"] = float(P.sum())
    row["noise_var"] = s.noise_var
    row["snr"] = snr(P, s.num_rx, s.noise_var)
    row["snr_db"] = float(lin_to_db(row["snr"]))
    row["sca_iterations"] = alloc.sca_iterations
    zeta = achieved_sinr(real.channel.gamma, alloc.omega, P, targets.delta_bar, s.noise_var)
    row["min_sinr_margin"] = float(np.min(zeta - targets.xi))
    for u in range(U):
        row[f"papr_db_{u}"] = papr_db(build_papr_model(real.symbols[u]), P[u])
    if traj is not None:
        end = traj.endpoint
        for u in range(U):
            row[f"ie_hat_{u}"] = float(end[u, 0])
            row[f"ie_ring_{u}"] = float(end[u, 1])
            row[f"bep_{u}"] = bep_of_targets(min(end[u, 1], 1 - 1e-9), min(end[u, 0], 1 - 1e-9))
        row["trajectory_iters"] = len(traj.points)
    for u in range(U):
        for m in range(N):
            row[f"P_{u}_{m}"] = float(P[u, m])
    return row


def power_ladder(gamma, targets, noise_var, symbols, deltas_db, cold_runs=None, **kw):
    """Allocations for no PAPR bound and each bound in ``deltas_db``.

    Looser problems are warm-started from the next tighter solution, which is
    feasible for them, and the better of the warm and cold runs is kept; so
    total power is ordered along the ladder despite SCA's local optima.
    Returns ``{None: alloc, d: alloc, ...}``; the plain cold-start runs are
    also stored in ``cold_runs`` when a dict is passed.
    """
    order = sorted(deltas_db)  # tight first
    out, prev = {}, None
    for d in order + [None]:
        lin = None if d is None else float(db_to_lin(d))
        cold = alternating_optimize(gamma, targets, noise_var, symbols=symbols, delta=lin, **kw)
        if cold_runs is not None:
            cold_runs[d] = cold
        best = cold
        if prev is not None:
            warm = alternating_optimize(gamma, targets, noise_var, symbols=symbols, delta=lin, P0=prev.P, **kw)
            if warm.total_power < cold.total_power:
                best = warm
        out[d] = best
        prev = best
    return out


def _equalizer(config, real, P, clip):
    """Semi-analytic map for ``clip=None``; Monte Carlo for ``"mc"`` or a
    clipping threshold in dB."""
    s = config.system
    if clip is None:
        return AnalyticEqualizer(real.channel.gamma, P, s.noise_var)
    return MonteCarloEqualizer(
        real.channel, P, s.noise_var, num_draws=config.num_blocks, seed=config.seed * 1000003 + real.index,
        waveform_fn=None if clip == "mc" else _clipper(clip),
    )


def _run_one(args):
    config, index = args
    real = draw_realization(config, index)
    curve = config.curve()
    g = real.channel.gamma
    kw = dict(max_rounds=config.max_rounds, max_iters=config.sca_max_iters)
    rows, states, trajs = [], [], []
    targets = None
    try:
        targets = config.targets()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            if config.strategy == "ccpa_papr":
                ladder = power_ladder(g, targets, config.system.noise_var, real.symbols, config.delta_db, **kw)
                runs = [(d, ladder[d], None) for d in config.delta_db]
            else:
                alloc = alternating_optimize(g, targets, config.system.noise_var, **kw)
                if config.strategy == "ccpa":
                    runs = [(None, alloc, None)]
                else:
                    runs = [(None, alloc, "mc")] + [(d, alloc, d) for d in config.delta_db]
    except InfeasibleError as err:
        return [_row(config, real, config.strategy, np.nan, None, targets, None, f"infeasible: {err}")], [], []
    for d, alloc, clip in runs:
        eq = _equalizer(config, real, alloc.P, clip)
        traj = simulate_trajectory(eq, curve, start=np.zeros(config.system.num_users))
        row = _row(config, real, config.strategy, np.nan if d is None else d, alloc, targets, traj, alloc.status)
        row["equalizer"] = "analytic" if clip is None else "monte_carlo"
        rows.append(row)
        states.append(alloc.sca_states)
        trajs.append(traj)
    return rows, states, trajs


@dataclass
class RunReport:
    """Per-realization rows plus aggregates."""

    rows: list
    sca_states: list = field(default_factory=list)
    trajectories: list = field(default_factory=list)

    @property
    def num_infeasible(self):
        return sum(str(r["status"]).startswith("infeasible") for r in self.rows)

    def column(self, name, **match):
        sel = [r for r in self.rows if all(r.get(k) == v or (isinstance(v, float) and np.isnan(v) and
                                                            isinstance(r.get(k), float) and np.isnan(r.get(k)))
                                           for k, v in match.items())]
        return np.array([r.get(name, np.nan) for r in sel], float)

    def aggregates(self):
        feas = [r for r in self.rows if "total_power" in r]
        if not feas:
            return {"realizations": len(self.rows), "infeasible": self.num_infeasible}
        pk = np.array([[v for k, v in r.items() if k.startswith("papr_db_")] for r in feas])
        return {
            "realizations": len({r["realization"] for r in self.rows}),
            "infeasible": self.num_infeasible,
            "mean_total_power": float(np.mean([r["total_power"] for r in feas])),
            "mean_snr_db": float(np.mean([r["snr_db"] for r in feas])),
            "worst_papr_db": float(pk.max()),
            "fraction_papr_above_3db": float(np.mean(pk.max(axis=1) > 3.0)),
            "worst_sinr_margin": float(np.min([r["min_sinr_margin"] for r in feas])),
        }

    def to_csv(self, path):
        keys = []
        for r in self.rows:
            keys += [k for k in r if k not in keys]
        with open(path, "w") as fh:
            fh.write(",".join(keys) + "\n")
            for r in self.rows:
                fh.write(",".join(_fmt(r.get(k, "")) for k in keys) + "\n")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v).replace(",", ";")


def run_experiment(config):
    """Run ``config.strategy`` on every realization."""
    jobs = [(config, i) for i in range(config.num_realizations)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    report = RunReport(rows=[])
    for rows, states, trajs in results:
        report.rows += rows
        report.sca_states += states
        report.trajectories += trajs
    return report


def evaluate_clipping(config):
    """CCPA allocations sent through a clipper at each ``delta_db`` threshold.

    The row with ``delta_db`` NaN is the unclipped Monte-Carlo reference.
    """
    return run_experiment(replace(config, strategy="ccpa_clip"))


def equalizer_curve(equalizer, num_users, points=21):
    """Diagonal samples ``(I_A, I_E[u])`` of an equalizer map."""
    grid = np.linspace(0.0, 1.0 - 1e-6, points)
    return grid, np.array([equalizer(np.full(num_users, x)) for x in grid])


def emit_exit_chart_data(trajectories, curves, path, equalizer_samples=None, curve_points=21, num_users=None):
    """CSV ``series,user,index,x,y`` with ``x`` the equalizer output MI.

    Rows: decoder curve samples, equalizer curve samples (already averaged
    over realizations when given as ``(grid, I_E[points, U])``), and two
    staircase corners per trajectory iteration.
    """
    if not isinstance(trajectories, (list, tuple)):
        trajectories = [trajectories]
    U = trajectories[0].points.shape[1] if trajectories else num_users
    if not isinstance(curves, (list, tuple)):
        curves = [curves] * U
    grid = np.linspace(0.0, 1.0, curve_points)
    with open(path, "w") as fh:
        fh.write("series,user,index,x,y\n")
        for u in range(U):
            for i, x in enumerate(grid):
                fh.write(f"decoder,{u},{i},{x:.6f},{float(curves[u](x)):.6f}\n")
            if equalizer_samples is not None:
                eg, ev = equalizer_samples
                for i, (y, x) in enumerate(zip(eg, ev[:, u])):
                    fh.write(f"equalizer,{u},{i},{x:.6f},{y:.6f}\n")
            for traj in trajectories:
                prev = 0.0
                for i, (ih, ir) in enumerate(traj.points[:, u]):
                    fh.write(f"trajectory,{u},{2 * i},{ih:.6f},{prev:.6f}\n")
                    fh.write(f"trajectory,{u},{2 * i + 1},{ih:.6f},{ir:.6f}\n")
                    prev = ir


def write_outputs(config, report, out_dir=None):
    """``report.csv``, ``exit_chart.csv`` and ``solver_trace.csv`` in ``out_dir``."""
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "report.csv")
    write_solver_trace([st for run in report.sca_states for st in run], out / "solver_trace.csv")
    if report.trajectories:
        # chart the first feasible run's setting, equalizer averaged over realizations
        first = next(r for r in report.rows if "total_power" in r)
        U, N = config.system.num_users, config.system.block_len
        same = [r for r in report.rows if "total_power" in r and _same(r["delta_db"], first["delta_db"])]
        clip = None
        if first["equalizer"] == "monte_carlo":
            clip = "mc" if np.isnan(first["delta_db"]) else first["delta_db"]
        curves = []
        for r in same:
            P = np.array([[r[f"P_{u}_{m}"] for m in range(N)] for u in range(U)])
            eq = _equalizer(config, draw_realization(config, r["realization"]), P, clip)
            curves.append(equalizer_curve(eq, U))
        avg = (curves[0][0], np.mean([c[1] for c in curves], axis=0))
        emit_exit_chart_data(report.trajectories[0], config.curve(), out / "exit_chart.csv", equalizer_samples=avg)
    else:
        emit_exit_chart_data([], config.curve(), out / "exit_chart.csv", num_users=config.system.num_users)
    return out


def _same(a, b):
    return (isinstance(a, float) and isinstance(b, float) and np.isnan(a) and np.isnan(b)) or a == b
