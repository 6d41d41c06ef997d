import pytest

from kernels.spectral import random_divfree_field
from models.grid import DealiasRule, GridSpec
from models.params import CbfParams


@pytest.fixture
def grid():
    return GridSpec(n=16)


@pytest.fixture
def cubic_grid():
    return GridSpec(n=16, dealias_rule=DealiasRule.ONE_HALF)


@pytest.fixture
def params():
    return CbfParams(mu=0.1, alpha=0.1, beta=1.0, r=3)


@pytest.fixture
def make_field():
    def _make(grid, seed, norm=1.0):
        return random_divfree_field(grid, seed, norm_h=norm)
    return _make
