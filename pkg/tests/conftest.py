import numpy as np
import pytest

from ppdiag import PointPattern, unit_square


@pytest.fixture(scope="session")
def square():
    return unit_square()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)


@pytest.fixture()
def random_pattern(square, rng):
    """A plain binomial pattern for exactness checks."""
    return PointPattern(rng.uniform(0.0, 1.0, (60, 2)), square)
