import numpy as np
import pytest

from papralloc.exitlab import build_targets, ra_rate13_curve
from papralloc.sigmodel import random_qpsk_block, rayleigh_channel


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def ra_curve():
    return ra_rate13_curve()


@pytest.fixture(scope="session")
def op_targets(ra_curve):
    """Desk-scale operating point: K=10 grid, 0.01 gap, two users."""
    return build_targets(ra_curve, 10, [0.01, 0.01], 0.9998, ie_hat_target=0.7892)


@pytest.fixture(scope="session")
def channel():
    return rayleigh_channel(7)


@pytest.fixture(scope="session")
def blocks():
    return [random_qpsk_block(100 + u).symbols for u in range(2)]


_CRITERIA = {}


@pytest.fixture(scope="session")
def criterion():
    """Record ``(number, passed, detail)`` for the acceptance summary."""

    def record(number, passed, detail=""):
        _CRITERIA[number] = (bool(passed), detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
