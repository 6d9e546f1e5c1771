import numpy as np
import pytest

from acgibbs.potential import Potential


@pytest.fixture(scope="session")
def quartic():
    return Potential.quartic()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
