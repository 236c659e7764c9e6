"""Input checks shared by the public entry points."""
import numpy as np


class DimensionError(ValueError):
    """Array shapes do not agree with the system dimensions."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class InfeasibleError(RuntimeError):
    """No allocation satisfies the requested constraints."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


def check_vector(x, length=None, name="x", dtype=complex):
    x = np.asarray(x, dtype=dtype)
    if x.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {x.shape}")
    if length is not None and x.shape[0] != length:
        raise DimensionError(f"{name} has length {x.shape[0]}, expected {length}")
    return x


def check_power(P, shape=None, name="P"):
    P = np.asarray(P, dtype=float)
    if shape is not None and P.shape != tuple(shape):
        raise DimensionError(f"{name} has shape {P.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(P)):
        raise DomainError(f"{name} contains non-finite entries")
    if np.any(P < 0):
        raise DomainError(f"{name} must be nonnegative")
    return P


def check_unit_modulus(b, atol=1e-9):
    b = np.asarray(b, dtype=complex)
    if np.any(np.abs(np.abs(b) - 1.0) > atol):
        raise DomainError("symbols must have unit modulus")
    return b
