import numpy as np
import pytest

from steernet import harmonics


@pytest.fixture(scope="session")
def basis9():
    return harmonics.build_basis(9)


@pytest.fixture(scope="session")
def basis5():
    return harmonics.build_basis(5)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
