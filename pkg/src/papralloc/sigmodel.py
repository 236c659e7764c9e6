"""Signal model: unitary DFT, circulant multipath channels, QPSK blocks and
the received block after cyclic-prefix removal.

The DFT matrix uses the positive exponent ``f[m, l] = exp(+2j*pi*m*l/N)/sqrt(N)``
throughout, and its inverse is the conjugate transpose.  With that convention
the per-bin channel response that diagonalises a circulant channel ``H`` is
``diag(F H F^-1)``, i.e. the positive-exponent transform of the taps.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from ._validation import DimensionError, DomainError, check_power, check_vector

QPSK_BITS = 2


@dataclass
class SystemConfig:
    """Dimensions and per-user parameters of one uplink setup."""

    num_users: int = 2
    num_rx: int = 2
    block_len: int = 8
    channel_len: int = 5
    noise_var: float = 1.0
    papr_threshold: np.ndarray = None
    gap: np.ndarray = None
    grid_size: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("num_users", "num_rx", "block_len", "channel_len", "grid_size"):
            if int(getattr(self, name)) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.channel_len > self.block_len:
            raise DomainError("channel_len must not exceed block_len")
        if not self.noise_var > 0:
            raise DomainError("noise_var must be positive")
        U = self.num_users
        delta = np.inf if self.papr_threshold is None else self.papr_threshold
        self.papr_threshold = np.broadcast_to(np.asarray(delta, float), (U,)).copy()
        if np.any(self.papr_threshold < 1):
            raise DomainError("papr_threshold must be >= 1 (linear)")
        gap = 0.0 if self.gap is None else self.gap
        self.gap = np.broadcast_to(np.asarray(gap, float), (U,)).copy()
        if np.any(self.gap < 0):
            raise DomainError("gap must be nonnegative")


@dataclass
class SymbolBlock:
    """One QPSK block with its Gray bit labels (``bits[n] = (z1, z2)``)."""

    symbols: np.ndarray
    bits: np.ndarray


@dataclass
class ChannelRealization:
    """Time-domain taps ``taps[u, r, l]`` and per-bin responses ``gamma[u, m, r]``."""

    taps: np.ndarray
    block_len: int
    gamma: np.ndarray = field(init=False)

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=complex)
        if self.taps.ndim != 3:
            raise DimensionError("taps must have shape (U, N_R, N_L)")
        if self.taps.shape[2] > self.block_len:
            raise DimensionError("channel longer than the block")
        self.gamma = freq_channel(self.taps, self.block_len)

    @property
    def num_users(self):
        return self.taps.shape[0]

    @property
    def num_rx(self):
        return self.taps.shape[1]


def dft(x):
    x = check_vector(x)
    return np.sqrt(x.shape[0]) * np.fft.ifft(x)


def idft(y):
    y = check_vector(y)
    return np.fft.fft(y) / np.sqrt(y.shape[0])


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def circulant(first_col):
    c = np.asarray(first_col)
    n = c.shape[0]
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return c[idx]


def freq_channel(taps, block_len):
    """Per-bin channel vectors ``gamma[u, m, r]`` for taps ``(U, N_R, N_L)``."""
    taps = np.asarray(taps, dtype=complex)
    padded = np.zeros(taps.shape[:-1] + (block_len,), dtype=complex)
    padded[..., : taps.shape[-1]] = taps
    gamma = block_len * np.fft.ifft(padded, axis=-1)
    return np.moveaxis(gamma, -1, 1)


def gray_qpsk(bits):
    """Map bit pairs to unit-energy QPSK; bit 0 maps to the positive axis."""
    bits = np.asarray(bits)
    return ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / np.sqrt(2)


def random_qpsk_block(seed, block_len=8):
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, size=(block_len, QPSK_BITS))
    return SymbolBlock(symbols=gray_qpsk(bits), bits=bits)


def rayleigh_channel(seed, num_users=2, num_rx=2, channel_len=5, block_len=8):
    """Equal-gain Rayleigh taps with per-tap variance ``1/channel_len``.

    Each (user, antenna) pair draws from its own child stream of ``seed``.
    """
    streams = np.random.SeedSequence(seed).spawn(num_users * num_rx)
    taps = np.empty((num_users, num_rx, channel_len), dtype=complex)
    for i, ss in enumerate(streams):
        g = np.random.default_rng(ss)
        u, r = divmod(i, num_rx)
        taps[u, r] = (g.standard_normal(channel_len) + 1j * g.standard_normal(channel_len)) / np.sqrt(
            2 * channel_len
        )
    return ChannelRealization(taps=taps, block_len=block_len)


def transmit_waveform(P, symbols):
    """Time-domain samples ``F^-1 P^(1/2) F b``; broadcasts over leading axes."""
    P = check_power(P)
    return np.fft.fft(np.sqrt(P) * np.fft.ifft(symbols, axis=-1), axis=-1)


def synth_received(channel, P, symbols, noise_var, noise_seed=None, waveforms=None):
    """Received space-time block ``r[..., r, n]`` (antenna-major).

    ``symbols`` is ``(..., U, N_F)``.  ``waveforms`` overrides the transmitted
    time-domain samples, e.g. after clipping.
    """
    U, N_R, _ = channel.taps.shape
    N = channel.block_len
    P = check_power(P, (U, N))
    if waveforms is None:
        symbols = np.asarray(symbols, dtype=complex)
        if symbols.shape[-2:] != (U, N):
            raise DimensionError(f"symbols must end in shape {(U, N)}")
        waveforms = transmit_waveform(P, symbols)
    # circulant convolution per (u, r), summed over users
    Hf = np.fft.fft(channel.taps, n=N, axis=-1)
    r = np.fft.ifft(np.einsum("urk,...uk->...rk", Hf, np.fft.fft(waveforms, axis=-1)), axis=-1)
    if noise_var > 0:
        rng = np.random.default_rng(noise_seed)
        r = r + np.sqrt(noise_var / 2) * (rng.standard_normal(r.shape) + 1j * rng.standard_normal(r.shape))
    return r


def save_channel_csv(channel, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "r", "l", "real", "imag"])
        U, R, L = channel.taps.shape
        for u in range(U):
            for r in range(R):
                for l in range(L):
                    h = channel.taps[u, r, l]
                    w.writerow([u, r, l, repr(float(h.real)), repr(float(h.imag))])


def load_channel_csv(path, block_len):
    with open(path, newline="") as fh:
        rows = [row for row in csv.DictReader(fh)]
    U = 1 + max(int(r["u"]) for r in rows)
    R = 1 + max(int(r["r"]) for r in rows)
    L = 1 + max(int(r["l"]) for r in rows)
    taps = np.zeros((U, R, L), dtype=complex)
    for row in rows:
        taps[int(row["u"]), int(row["r"]), int(row["l"])] = complex(float(row["real"]), float(row["imag"]))
    return ChannelRealization(taps=taps, block_len=block_len)
