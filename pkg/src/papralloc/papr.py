"""Instantaneous per-sample transmit power as a function of the per-bin
power allocation of one QPSK block, and the log-domain pieces used to
convexify the PAPR constraint.

Powers ``P`` are indexed by frequency bin; ``alpha = log(P)``.  Pair
coefficients ``eta[k, m]`` are stored over the upper-triangular bin pairs
``(n, i), n < i`` listed in ``PaprModel.pairs``.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from ._validation import DomainError, check_power, check_unit_modulus, check_vector

COEF_TOL = 1e-9


def _pair_index(n):
    ii, jj = np.triu_indices(n, k=1)
    return np.stack([ii, jj], axis=1)


def _coefficients(b):
    N = b.shape[0]
    idx = np.arange(N)
    p, q = np.triu_indices(N, k=1)
    p, q = q, p  # p > q
    rp, ip = b.real[p], b.imag[p]
    rq, iq = b.real[q], b.imag[q]
    same = rp * rq + ip * iq
    cross = rp * iq - ip * rq

    a = np.exp(2j * np.pi * np.outer(idx, p - q) / N)  # (l, pair)
    d = a.real @ same + a.imag @ cross

    pairs = _pair_index(N)
    n_, i_ = pairs[:, 0], pairs[:, 1]
    # a_{n p m} a*_{i q m} and a_{n q m} a*_{i p m}, axes (pair_ni, pair_pq, m)
    ph = lambda l, x: np.exp(2j * np.pi * np.multiply.outer(l, x[:, None] - idx[None, :]) / N)
    npm = ph(n_, p)
    iqm = ph(i_, q)
    nqm = ph(n_, q)
    ipm = ph(i_, p)
    A1 = npm * np.conj(iqm)
    A2 = nqm * np.conj(ipm)
    eta = np.einsum("j,kjm->km", same, A1.real + A2.real) - np.einsum(
        "j,kjm->km", -cross, A1.imag - A2.imag
    )
    return d, eta, pairs


@dataclass(frozen=True)
class PaprModel:
    """Power-allocation-independent coefficients of one symbol block."""

    symbols: np.ndarray
    d: np.ndarray
    eta: np.ndarray
    pairs: np.ndarray
    eta_plus: np.ndarray = field(init=False)
    eta_minus: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "eta_plus", np.maximum(self.eta, 0.0))
        object.__setattr__(self, "eta_minus", np.minimum(self.eta, 0.0))

    @property
    def block_len(self):
        return self.symbols.shape[0]

    @property
    def diag_coef(self):
        """``1 + 2 d_l / N``; equals ``|(F b)_l|^2`` and is never negative."""
        return 1.0 + 2.0 * self.d / self.block_len

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "n", "i", "m", "value"])
            for l, v in enumerate(self.d):
                w.writerow(["d", l, "", "", repr(v)])
            for k, (n, i) in enumerate(self.pairs):
                for m in range(self.block_len):
                    w.writerow(["eta", n, i, m, repr(self.eta[k, m])])


def build_papr_model(symbols):
    b = check_unit_modulus(check_vector(symbols, name="symbols"))
    d, eta, pairs = _coefficients(b)
    model = PaprModel(symbols=b, d=d, eta=eta, pairs=pairs)
    if np.any(model.diag_coef < -COEF_TOL):
        raise DomainError("diagonal coefficient 1 + 2 d_l / N is negative")
    return model


def _sqrt_pairs(model, P):
    return np.sqrt(P[model.pairs[:, 0]] * P[model.pairs[:, 1]])


def peak_power(model, P):
    """Closed-form ``|s_m|^2`` for every sample ``m``."""
    N = model.block_len
    P = check_power(P, (N,))
    return (model.diag_coef @ P) / N + 2.0 / N**2 * (_sqrt_pairs(model, P) @ model.eta)


def direct_peak_power(symbols, P):
    """Reference ``|F^-1 P^(1/2) F b|^2`` by explicit transforms."""
    P = check_power(P)
    s = np.fft.fft(np.sqrt(P) * np.fft.ifft(symbols))
    return np.abs(s) ** 2


def avg_power(P):
    P = check_power(P)
    return float(np.mean(P))


def papr_db(model, P):
    P = check_power(P, (model.block_len,))
    avg = avg_power(P)
    if avg <= 0:
        raise DomainError("PAPR undefined for all-zero power")
    return float(10 * np.log10(np.max(peak_power(model, P)) / avg))


def papr_constraint_residual(model, P, delta):
    """``N |s_m|^2 - delta * sum(P)`` split as in the constraint; <= 0 is feasible."""
    N = model.block_len
    P = check_power(P, (N,))
    sq = _sqrt_pairs(model, P)
    lhs = model.diag_coef @ P + 2.0 / N * (sq @ model.eta_plus)
    rhs = delta * P.sum() - 2.0 / N * (sq @ model.eta_minus)
    return lhs - rhs


# log-domain pieces --------------------------------------------------------


def _lse(log_terms):
    mx = np.max(log_terms, axis=0)
    return mx + np.log(np.sum(np.exp(log_terms - mx), axis=0))


def _log_weighted(weights, exponents):
    with np.errstate(divide="ignore"):
        return np.log(weights) + exponents


def lhs_logsumexp(model, alpha, m):
    """Convex side ``ln(sum c_l e^a_l + 2/N sum eta+ e^((a_n+a_i)/2))`` at sample ``m``."""
    alpha = np.asarray(alpha, float)
    N = model.block_len
    if np.any(model.diag_coef < -COEF_TOL):
        raise DomainError("diagonal coefficient 1 + 2 d_l / N is negative")
    half = 0.5 * (alpha[model.pairs[:, 0]] + alpha[model.pairs[:, 1]])
    terms = np.concatenate(
        [
            _log_weighted(np.maximum(model.diag_coef, 0.0), alpha),
            _log_weighted(2.0 / N * model.eta_plus[:, m], half),
        ]
    )
    return float(_lse(terms))


def W(model, alpha, delta, m):
    """``ln(delta sum e^a_l + 2/N sum (-eta-) e^((a_n+a_i)/2))`` at sample ``m``."""
    alpha = np.asarray(alpha, float)
    N = model.block_len
    half = 0.5 * (alpha[model.pairs[:, 0]] + alpha[model.pairs[:, 1]])
    terms = np.concatenate(
        [np.log(delta) + alpha, _log_weighted(-2.0 / N * model.eta_minus[:, m], half)]
    )
    return float(_lse(terms))


def grad_W(model, alpha, delta, m):
    """Gradient of ``W`` with respect to ``alpha``.

    Component ``k`` is ``delta e^a_k`` minus the two partial sums of
    ``eta-/N e^((a_n+a_i)/2)`` over pairs containing ``k``, divided by the
    argument of the logarithm.
    """
    alpha = np.asarray(alpha, float)
    N = model.block_len
    n_, i_ = model.pairs[:, 0], model.pairs[:, 1]
    shift = np.max(alpha)
    e = np.exp(alpha - shift)
    pair_terms = model.eta_minus[:, m] * np.sqrt(e[n_] * e[i_])
    numer = delta * e
    # pairs with k as the first index (sum over i > k) and as the second (n < k)
    numer -= np.bincount(n_, weights=pair_terms, minlength=N) / N
    numer -= np.bincount(i_, weights=pair_terms, minlength=N) / N
    denom = delta * e.sum() - 2.0 / N * pair_terms.sum()
    return numer / denom


def T(model, alpha, alpha_hat, delta, m):
    """First-order expansion of ``W`` around ``alpha_hat``; a global under-estimator."""
    alpha = np.asarray(alpha, float)
    alpha_hat = np.asarray(alpha_hat, float)
    return W(model, alpha_hat, delta, m) + float(grad_W(model, alpha_hat, delta, m) @ (alpha - alpha_hat))
