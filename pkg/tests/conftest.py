import numpy as np
import pytest

from flatdrift.tori import Prototype, prototype_float


@pytest.fixture(scope="session")
def d8():
    return prototype_float(Prototype(0, 2, 1, 0))


@pytest.fixture(scope="session")
def d16():
    return prototype_float(Prototype(0, 4, 1, 0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
