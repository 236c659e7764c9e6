import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from papralloc import ConvergenceConstrainedAllocator
from papralloc._validation import DimensionError, DomainError


@pytest.fixture(scope="module")
def fitted(request):
    from papralloc.sigmodel import random_qpsk_block, rayleigh_channel

    ch = rayleigh_channel(5)
    blocks = [random_qpsk_block(60 + u).symbols for u in range(2)]
    est = ConvergenceConstrainedAllocator(grid_size=4, papr_db=3.0).fit(ch.gamma, blocks)
    return est, ch


class TestAllocator:
    def test_params_roundtrip(self):
        est = ConvergenceConstrainedAllocator(gap=0.02, papr_db=6.0)
        assert est.get_params()["gap"] == 0.02
        c = clone(est).set_params(grid_size=5)
        assert c.grid_size == 5 and c.papr_db == 6.0

    def test_fitted_attributes(self, fitted):
        est, ch = fitted
        assert est.power_.shape == (2, 8) and est.receivers_.shape == (4, 2, 8, 2)
        assert np.all(est.papr_db_ <= 3.0 + 1e-6)
        assert np.all(est.sinr_ >= est.targets_.xi - 1e-6)
        assert est.total_power_ == pytest.approx(est.power_.sum())
        assert est.snr(2) == pytest.approx(est.power_.sum() / 16)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            ConvergenceConstrainedAllocator().snr(2)

    @pytest.mark.parametrize("kw", [{"noise_var": 0.0}, {"grid_size": 1}, {"papr_db": -1.0}])
    def test_bad_params(self, kw):
        with pytest.raises(DomainError):
            ConvergenceConstrainedAllocator(**kw).fit(np.ones((2, 8, 2)))

    def test_needs_blocks_for_papr(self):
        with pytest.raises(DimensionError):
            ConvergenceConstrainedAllocator(papr_db=3.0).fit(np.ones((2, 8, 2)))
