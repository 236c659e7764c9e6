"""Estimator-style front end: ``fit`` a power allocation to one channel."""
import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import DimensionError, DomainError
from .exitlab import build_targets, ra_rate13_curve
from .papr import build_papr_model, papr_db
from .sca import achieved_sinr, alternating_optimize


class ConvergenceConstrainedAllocator(BaseEstimator):
    """Minimum transmit power meeting turbo-equalizer convergence targets.

    Parameters
    ----------
    noise_var : float
        Receiver noise variance.
    grid_size : int
        Number of diagonal-sampling points ``K``.
    gap : float
        Tunnel gap added to every grid point except the last.
    ie_ring_target, ie_hat_target : float
        Decoder-output and equalizer-output MI at the convergence point.
    papr_db : float or None
        Per-user PAPR bound in dB; ``None`` leaves the PAPR free.
    decoder_curve : ExitCurve or None
        Decoder transfer curve; the bundled rate-1/3 RA curve by default.
    max_rounds, max_iters : int
        Caps on receiver updates and SCA iterations per update.

    Attributes after ``fit``: ``power_`` (U, N), ``receivers_``
    (K, U, N, N_R), ``targets_``, ``total_power_``, ``papr_db_``,
    ``sinr_`` (U, K) and ``trace_`` (total power per round).
    """

    def __init__(
        self,
        noise_var=1.0,
        grid_size=10,
        gap=0.01,
        ie_ring_target=0.9998,
        ie_hat_target=0.7892,
        papr_db=None,
        decoder_curve=None,
        max_rounds=20,
        max_iters=50,
    ):
        self.noise_var = noise_var
        self.grid_size = grid_size
        self.gap = gap
        self.ie_ring_target = ie_ring_target
        self.ie_hat_target = ie_hat_target
        self.papr_db = papr_db
        self.decoder_curve = decoder_curve
        self.max_rounds = max_rounds
        self.max_iters = max_iters

    def _check_params(self):
        if not self.noise_var > 0:
            raise DomainError("noise_var must be positive")
        if int(self.grid_size) < 2:
            raise DomainError("grid_size must be at least 2")
        if self.papr_db is not None and self.papr_db < 0:
            raise DomainError("papr_db must be >= 0")

    def fit(self, gamma, symbols=None):
        """Allocate powers for per-bin channels ``gamma[u, m, r]``.

        ``symbols[u]`` (the QPSK block of each user) is needed when
        ``papr_db`` is set.
        """
        self._check_params()
        gamma = np.asarray(gamma, complex)
        if gamma.ndim != 3:
            raise DimensionError("gamma must have shape (U, N, N_R)")
        U, N = gamma.shape[:2]
        delta = None
        if self.papr_db is not None:
            if symbols is None or len(symbols) != U:
                raise DimensionError("a PAPR bound needs one symbol block per user")
            delta = 10.0 ** (self.papr_db / 10.0)
        curve = self.decoder_curve if self.decoder_curve is not None else ra_rate13_curve()
        self.targets_ = build_targets(
            curve, int(self.grid_size), np.full(U, self.gap), self.ie_ring_target, ie_hat_target=self.ie_hat_target
        )
        alloc = alternating_optimize(
            gamma, self.targets_, self.noise_var, symbols=symbols, delta=delta,
            max_rounds=self.max_rounds, max_iters=self.max_iters,
        )
        self.power_ = alloc.P
        self.receivers_ = alloc.omega
        self.total_power_ = alloc.total_power
        self.trace_ = np.array(alloc.power_trace)
        self.status_ = alloc.status
        self.sca_states_ = alloc.sca_states
        self.sinr_ = achieved_sinr(gamma, alloc.omega, alloc.P, self.targets_.delta_bar, self.noise_var)
        self.papr_db_ = None
        if symbols is not None:
            self.papr_db_ = np.array([papr_db(build_papr_model(s), alloc.P[u]) for u, s in enumerate(symbols)])
        return self

    def snr(self, num_rx):
        """``tr{P} / (N_R N_F noise_var)`` of the fitted allocation."""
        check_is_fitted(self, "power_")
        return float(self.power_.sum() / (num_rx * self.power_.shape[1] * self.noise_var))
