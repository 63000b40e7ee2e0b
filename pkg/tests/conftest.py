import numpy as np
import pytest

from superpose.model import derive_channel


@pytest.fixture(scope="session")
def ch7():
    return derive_channel(7.0)


@pytest.fixture(scope="session")
def ch15():
    return derive_channel(15.0)


@pytest.fixture(scope="session")
def ch1():
    return derive_channel(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
