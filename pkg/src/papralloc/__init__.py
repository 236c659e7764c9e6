"""PAPR-aware convergence-constrained power allocation for SC-FDMA uplinks
with frequency-domain soft-cancellation MMSE turbo equalization."""
from ._validation import DimensionError, DomainError, InfeasibleError
from .estimator import ConvergenceConstrainedAllocator
from .exitlab import ExitCurve, build_targets, load_decoder_curve, ra_rate13_curve, simulate_trajectory
from .harness import ExperimentConfig, clip_waveform, evaluate_clipping, run_experiment
from .jfunc import J, J_inv, bep_of_targets
from .papr import build_papr_model, papr_db
from .sca import alternating_optimize, init_feasible, sca_ccpa, sca_ccpa_papr
from .sigmodel import ChannelRealization, SystemConfig, rayleigh_channel

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization", "ConvergenceConstrainedAllocator", "DimensionError", "DomainError", "ExitCurve",
    "ExperimentConfig", "InfeasibleError", "J", "J_inv", "SystemConfig", "alternating_optimize",
    "bep_of_targets", "build_papr_model", "build_targets", "clip_waveform", "evaluate_clipping", "init_feasible",
    "load_decoder_curve", "papr_db", "ra_rate13_curve", "rayleigh_channel", "run_experiment", "sca_ccpa",
    "sca_ccpa_papr", "simulate_trajectory",
]
