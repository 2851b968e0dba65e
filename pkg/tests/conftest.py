import numpy as np
import pytest

from paretomarket.market import GoodsSpec
from paretomarket.wealth import WealthVector


@pytest.fixture
def toy_economy():
    """Two agents with wealth {1, 2}, two unit-price objects.

    Small enough to enumerate by hand: the feasible owner vectors are
    (0,1), (1,0), (1,1) and the exact stationary success rate is 2/3.
    """
    wealth = WealthVector(values=np.array([1.0, 2.0]), c_min=1.0)
    goods = GoodsSpec(
        k_classes=1,
        prices=np.array([1], dtype=np.int64),
        counts=np.array([2], dtype=np.int64),
        quantum=1.0,
    )
    return wealth, goods


@pytest.fixture
def lopsided_economy():
    """Three agents {1, 1, 4} and three unit-price objects.

    Both meeting rules leave the uniform law invariant here, but their
    per-attempt success rates differ, which several tests pin down.
    """
    wealth = WealthVector(values=np.array([1.0, 1.0, 4.0]), c_min=1.0)
    goods = GoodsSpec(
        k_classes=1,
        prices=np.array([1], dtype=np.int64),
        counts=np.array([3], dtype=np.int64),
        quantum=1.0,
    )
    return wealth, goods
