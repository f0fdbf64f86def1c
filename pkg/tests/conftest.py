import numpy as np
import pytest

from lerwkit.lattice import lazy_random_walk, simple_random_walk, triangular_walk


@pytest.fixture(scope="session")
def srw():
    return simple_random_walk()


@pytest.fixture(scope="session")
def lazy():
    return lazy_random_walk()


@pytest.fixture(scope="session")
def tri():
    return triangular_walk()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
