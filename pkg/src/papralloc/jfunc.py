"""J-function: MI of a consistent Gaussian LLR (mean sigma^2/2, variance sigma^2)
as a function of sigma, using a three-parameter closed-form fit together with
its exact inverse."""
import numpy as np
from scipy.special import erfc

from ._validation import DomainError

H1, H2, H3 = 0.3073, 0.8935, 1.1064


def J(sigma):
    sigma = np.asarray(sigma, float)
    if np.any(sigma < 0):
        raise DomainError("J is defined for sigma >= 0")
    out = (1.0 - np.exp2(-H1 * sigma ** (2 * H2))) ** H3
    return out if out.ndim else float(out)


def J_inv(mi):
    mi = np.asarray(mi, float)
    if np.any(mi < 0) or np.any(mi >= 1):
        raise DomainError("J_inv is defined on [0, 1)")
    with np.errstate(divide="ignore"):
        out = (-np.log2(1.0 - mi ** (1.0 / H3)) / H1) ** (1.0 / (2 * H2))
    out = np.where(mi > 0, out, 0.0)
    return out if out.ndim else float(out)


def bep_of_targets(ia_target, ie_target):
    """Bit error probability after decoding at an EXIT convergence point."""
    s2 = J_inv(ia_target) ** 2 + J_inv(ie_target) ** 2
    return float(0.5 * erfc(np.sqrt(s2) / (2 * np.sqrt(2))))


def gaussian_llrs(signs, mi, rng):
    """Consistent Gaussian LLRs for bit signs ``+-1`` at mutual information ``mi``."""
    signs = np.asarray(signs, float)
    if mi >= 1:
        return signs * np.inf
    s = J_inv(mi)
    return signs * (0.5 * s * s) + s * rng.standard_normal(signs.shape)


def llr_mi(llrs, signs):
    """Ensemble-average MI estimate ``1 - E log2(1 + exp(-x L))``."""
    return float(1.0 - np.mean(np.logaddexp(0.0, -np.asarray(signs) * llrs)) / np.log(2))


def gaussian_fit_mi(llrs, signs):
    """MI of the consistent Gaussian LLR with the same mean-to-spread ratio.

    Invariant to a common scaling of the LLRs, so it measures the information
    the decoder could use even when the demapper's scale is mismatched.
    """
    y = np.asarray(signs) * np.asarray(llrs)
    m, v = y.mean(), y.var()
    if m <= 0 or v <= 0:
        return 0.0 if m <= 0 else float(J(60.0))
    return float(J(min(2.0 * m / np.sqrt(v), 60.0)))
