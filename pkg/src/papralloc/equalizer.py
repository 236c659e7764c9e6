"""Frequency-domain soft-cancelation MMSE equalizer: soft symbols, residual
interference, per-bin MMSE beamformers, effective SINR and the resulting LLR
statistics, plus block equalization with Gray-QPSK extrinsic demapping.

Channel vectors are ``gamma[u, m, r]``; powers ``P[u, m]``.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._validation import DimensionError, DomainError, check_power
from .jfunc import J, gaussian_fit_mi, gaussian_llrs
from .sigmodel import gray_qpsk, synth_received, transmit_waveform

SQRT2 = np.sqrt(2.0)


@dataclass
class SoftSymbolStats:
    b_tilde: np.ndarray
    b_ddot: np.ndarray
    delta_bar: np.ndarray


def soft_symbols(llrs):
    """Soft QPSK estimates from a-priori LLRs ``llrs[..., n, q]``."""
    llrs = np.asarray(llrs, float)
    if llrs.shape[-1] != 2:
        raise DimensionError("QPSK needs two LLRs per symbol")
    th = np.tanh(0.5 * llrs)
    b_tilde = (th[..., 0] + 1j * th[..., 1]) / SQRT2
    b_ddot = np.abs(b_tilde) ** 2
    return SoftSymbolStats(b_tilde, b_ddot, np.mean(1.0 - b_ddot, axis=-1))


def soft_symbols_enumerated(llrs):
    """Soft symbols by explicit expectation over the four Gray QPSK points."""
    llrs = np.asarray(llrs, float)
    out = np.zeros(llrs.shape[:-1], dtype=complex)
    for z1 in (0, 1):
        for z2 in (0, 1):
            sym = ((1 - 2 * z1) + 1j * (1 - 2 * z2)) / SQRT2
            pr = 0.25
            for q, z in enumerate((z1, z2)):
                pr = pr * (1 - (2 * z - 1) * np.tanh(0.5 * llrs[..., q]))
            out += sym * pr
    return out


@lru_cache(maxsize=4096)
def _delta_bar_cached(mi, samples, seed):
    if mi <= 0:
        return 1.0
    if mi >= 1:
        return 0.0
    rng = np.random.default_rng(seed)
    lam = gaussian_llrs(np.ones(samples), mi, rng)
    return float(1.0 - np.mean(np.tanh(0.5 * lam) ** 2))


def delta_bar_of_mi(mi, samples=100_000, seed=0):
    """Average residual interference ``E[1 - |b~|^2]`` at a-priori MI ``mi``.

    Common random numbers per seed make the result a smooth function of ``mi``.
    """
    mi = float(mi)
    if not 0 <= mi <= 1:
        raise DomainError("mutual information must lie in [0, 1]")
    return _delta_bar_cached(mi, int(samples), int(seed))


def delta_bar_mc_stderr(mi, samples=100_000, seed=0):
    rng = np.random.default_rng(seed)
    lam = gaussian_llrs(np.ones(samples), mi, rng)
    return float(np.std(np.tanh(0.5 * lam) ** 2) / np.sqrt(samples))


def _interference_cov(gamma, P, delta_bar, noise_var):
    """``R[..., m] = sum_l P_lm dbar_l g_lm g_lm^H + s2 I`` for batched ``delta_bar[..., U]``."""
    delta_bar = np.asarray(delta_bar, float)
    w = P[None] * delta_bar.reshape(-1, P.shape[0])[:, :, None]  # (B, U, M)
    R = np.einsum("bum,umr,ums->bmrs", w, gamma, gamma.conj())
    R = R + noise_var * np.eye(gamma.shape[-1])
    return R.reshape(delta_bar.shape[:-1] + R.shape[1:])


def mmse_receiver(gamma, P, delta_bar, noise_var):
    """MMSE beamformers ``omega[..., u, m, r]``, SINR ``zeta[..., u]`` and
    interference covariances, batched over leading axes of ``delta_bar``.

    The denominator constant ``(1 - dbar_u) zeta_u + 1`` depends on ``zeta``
    which itself is invariant to the filter scale, so no fixed point is needed.
    """
    gamma = np.asarray(gamma, complex)
    P = check_power(P, gamma.shape[:2])
    delta_bar = np.asarray(delta_bar, float)
    R = _interference_cov(gamma, P, delta_bar, noise_var)
    rhs = np.broadcast_to(np.moveaxis(gamma, 0, -1), R.shape[:-1] + (gamma.shape[0],))
    v = np.linalg.solve(R, rhs)  # (..., m, r, u)
    v = np.moveaxis(v, -1, -3)  # (..., u, m, r)
    beta = P * np.real(np.einsum("...umr,umr->...um", v, gamma.conj()))
    zeta = beta.mean(axis=-1)
    c = (1.0 - delta_bar) * zeta + 1.0
    omega = v * np.sqrt(P)[..., None] / c[..., None, None]
    return omega, zeta, R


def mmse_beamformer(gamma, P, delta_bar, noise_var, u, m, zeta=None):
    """Receive beamformer of user ``u`` at bin ``m``."""
    gamma = np.asarray(gamma, complex)
    P = check_power(P, gamma.shape[:2])
    delta_bar = np.broadcast_to(np.asarray(delta_bar, float), (gamma.shape[0],))
    if zeta is None:
        _, zeta_all, _ = mmse_receiver(gamma, P, delta_bar, noise_var)
        zeta = zeta_all[u]
    R = np.einsum("l,lr,ls->rs", P[:, m] * delta_bar, gamma[:, m], gamma[:, m].conj())
    R += noise_var * np.eye(gamma.shape[-1])
    v = np.linalg.solve(R, gamma[u, m]) * np.sqrt(P[u, m])
    return v / ((1.0 - delta_bar[u]) * zeta + 1.0)


def per_bin_sinr(gamma, omega_u, P, delta_bar, noise_var, u):
    gamma = np.asarray(gamma, complex)
    delta_bar = np.broadcast_to(np.asarray(delta_bar, float), (gamma.shape[0],))
    gains = np.abs(np.einsum("mr,lmr->lm", omega_u.conj(), gamma)) ** 2
    num = P[u] * gains[u]
    den = (P * gains * delta_bar[:, None]).sum(axis=0) + noise_var * np.sum(np.abs(omega_u) ** 2, axis=-1)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def effective_sinr(gamma, omega_u, P, delta_bar, noise_var, u):
    """Frequency-averaged per-bin SINR of user ``u`` with filters ``omega_u[m, r]``."""
    P = check_power(P, np.shape(gamma)[:2])
    return float(per_bin_sinr(gamma, np.asarray(omega_u, complex), P, delta_bar, noise_var, u).mean())


def llr_variance(zeta, delta_bar):
    zeta = np.asarray(zeta, float)
    delta_bar = np.asarray(delta_bar, float)
    if np.any(zeta * delta_bar >= 1):
        raise DomainError("zeta * delta_bar must be < 1")
    out = 4.0 * zeta / (1.0 - zeta * delta_bar)
    return out if out.ndim else float(out)


def equalize_block(received, gamma, P, soft, noise_var, return_estimates=False):
    """Soft-cancel, filter and demap received blocks into extrinsic LLRs.

    ``received[..., r, n]`` in the time domain, ``soft.b_tilde[..., u, n]``
    and ``soft.delta_bar[..., u]`` from the a-priori LLRs.  Returns
    ``llrs[..., u, n, q]``.
    """
    gamma = np.asarray(gamma, complex)
    U, N, N_R = gamma.shape
    P = check_power(P, (U, N))
    received = np.asarray(received, complex)
    if received.shape[-2:] != (N_R, N):
        raise DimensionError(f"received block must end in {(N_R, N)}")
    b_tilde = np.asarray(soft.b_tilde, complex)
    dbar = np.asarray(soft.delta_bar, float)
    batch = received.shape[:-2]
    b_tilde = np.broadcast_to(b_tilde, batch + (U, N))
    dbar = np.broadcast_to(dbar, batch + (U,))

    r_f = np.sqrt(N) * np.fft.ifft(received, axis=-1)  # unitary DFT per antenna
    r_f = np.swapaxes(r_f, -1, -2)  # (..., m, r)
    bt_f = np.sqrt(N) * np.fft.ifft(b_tilde, axis=-1)
    r_hat = r_f - np.einsum("umr,um,...um->...mr", gamma, np.sqrt(P), bt_f)

    omega, zeta, R = mmse_receiver(gamma, P, dbar, noise_var)
    y = np.einsum("...umr,...mr->...um", omega.conj(), r_hat)
    z = np.fft.fft(y, axis=-1) / np.sqrt(N)
    mu = np.real(np.einsum("...umr,umr,um->...u", omega.conj(), gamma, np.sqrt(P))) / N
    out_pow = np.real(np.einsum("...umr,...mrs,...ums->...u", omega.conj(), R, omega)) / N
    nu2 = out_pow - mu**2 * dbar
    x_hat = z + mu[..., None] * b_tilde
    scale = np.divide(2 * SQRT2 * mu, nu2, out=np.zeros_like(mu), where=nu2 > 0)
    llrs = np.stack([x_hat.real, x_hat.imag], axis=-1) * scale[..., None, None]
    if return_estimates:
        return llrs, x_hat, mu, nu2
    return llrs


class AnalyticEqualizer:
    """Semi-analytic equalizer EXIT map ``I_A[u] -> I_E[u]`` for fixed powers."""

    def __init__(self, gamma, P, noise_var, samples=100_000, seed=0):
        self.gamma = np.asarray(gamma, complex)
        self.P = check_power(P, self.gamma.shape[:2])
        self.noise_var = noise_var
        self.samples = samples
        self.seed = seed

    def llr_std(self, mi_apriori):
        dbar = np.array([delta_bar_of_mi(x, self.samples, self.seed) for x in np.atleast_1d(mi_apriori)])
        dbar = np.broadcast_to(dbar, (self.gamma.shape[0],))
        _, zeta, _ = mmse_receiver(self.gamma, self.P, dbar, self.noise_var)
        return np.sqrt(llr_variance(zeta, dbar))

    def __call__(self, mi_apriori):
        return np.asarray(J(self.llr_std(mi_apriori)))


class MonteCarloEqualizer:
    """Simulated equalizer EXIT map for fixed powers.

    Every draw sends fresh random QPSK blocks (or the fixed ``blocks`` when
    given), new noise and new a-priori LLRs.  ``waveform_fn`` maps nominal
    time-domain samples ``s[..., u, n]`` and the per-user average powers to
    what is actually radiated, e.g. a clipper.  Draws are seeded by ``seed``
    so repeated calls use common random numbers.
    """

    def __init__(self, channel, P, noise_var, num_draws=1000, seed=0, waveform_fn=None, blocks=None):
        self.channel = channel
        self.P = check_power(P, channel.gamma.shape[:2])
        self.noise_var = noise_var
        self.num_draws = num_draws
        self.seed = seed
        self.waveform_fn = waveform_fn
        self.blocks = blocks

    def _draw(self, mi_apriori):
        rng = np.random.default_rng(self.seed)
        U, N = self.P.shape
        N_R = self.channel.num_rx
        B = self.num_draws
        if self.blocks is None:
            bits = rng.integers(0, 2, size=(B, U, N, 2))
        else:
            bits = np.broadcast_to(np.stack([b.bits for b in self.blocks]), (B, U, N, 2))
        symbols = gray_qpsk(bits)
        s = transmit_waveform(self.P, symbols)
        if self.waveform_fn is not None:
            s = self.waveform_fn(s, self.P.mean(axis=-1))
        noise = np.sqrt(self.noise_var / 2) * (
            rng.standard_normal((B, N_R, N)) + 1j * rng.standard_normal((B, N_R, N))
        )
        received = synth_received(self.channel, self.P, None, 0.0, waveforms=s) + noise
        signs = 1.0 - 2.0 * bits
        apri = np.stack([gaussian_llrs(signs[:, u], mi_apriori[u], rng) for u in range(U)], axis=1)
        return received, apri, signs

    def llrs(self, mi_apriori):
        """Extrinsic LLRs ``[draw, u, n, q]`` and the matching bit signs."""
        mi_apriori = np.broadcast_to(np.asarray(mi_apriori, float), (self.P.shape[0],))
        received, apri, signs = self._draw(mi_apriori)
        soft = soft_symbols(apri)
        return equalize_block(received, self.channel.gamma, self.P, soft, self.noise_var), signs

    def __call__(self, mi_apriori):
        llrs, signs = self.llrs(mi_apriori)
        return np.array([gaussian_fit_mi(llrs[:, u], signs[:, u]) for u in range(self.P.shape[0])])


def sinr_contributions_csv(gamma, omega, P, delta_bar, noise_var, path):
    """Dump per-bin SINR terms ``user,bin,sinr``."""
    with open(path, "w") as fh:
        fh.write("user,bin,sinr\n")
        for u in range(gamma.shape[0]):
            for m, v in enumerate(per_bin_sinr(gamma, omega[u], P, delta_bar, noise_var, u)):
                fh.write(f"{u},{m},{v:.12g}\n")
