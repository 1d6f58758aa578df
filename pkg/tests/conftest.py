"""
Test fixtures for the large-deviations laboratory tests.
"""
import numpy as np
import pytest

from ldlab.services.catalog import gaussian_model, laplace_model, model_from_id
from ldlab.services.concentration import maxplus_concentration
from ldlab.services.conjugate import TestingFamily
from ldlab.services.extgrid import GridFunction, GridSpace
from ldlab.services.metrics import metrics_collector


@pytest.fixture
def three_points():
    """Grid {-1, 0, 1}"""
    return GridSpace.line(-1.0, 1.0, 3)


@pytest.fixture
def plane():
    """5 x 5 grid with unit step centred at the origin"""
    return GridSpace(lower=(-2.0, -2.0), upper=(2.0, 2.0), points_per_axis=(5, 5))


@pytest.fixture
def maxplus_j(three_points):
    """Max-plus concentration with density (0, -1, -2)"""
    return maxplus_concentration(three_points, [0.0, -1.0, -2.0])


@pytest.fixture(scope="session")
def laplace():
    """Laplace model on [-3, 3] with 601 points"""
    return laplace_model()


@pytest.fixture(scope="session")
def gaussian():
    """Centred Gaussian model on [-4, 4] with 801 points"""
    return gaussian_model()


@pytest.fixture(scope="session")
def robust():
    """Maximum of the Gaussians centred at -1 and +1 on [-4, 4]"""
    return model_from_id("robust:gaussian(-1),gaussian(+1)")


@pytest.fixture(scope="session")
def invv_family():
    """Inverted-v members for every grid point of the Laplace box"""
    return TestingFamily.inverted_v(-3.0, 3.0, 0.01)


@pytest.fixture(scope="session")
def linear_family():
    return TestingFamily.linear(-0.95, 0.95, 0.05)


@pytest.fixture
def linear_function():
    """f(x) = y x on the given space"""
    def build(space, y):
        return GridFunction.from_array(space, y * space.points[:, 0])
    return build


@pytest.fixture
def clean_metrics():
    """Reset the global metrics collector before and after each test"""
    metrics_collector.clear()
    yield metrics_collector
    metrics_collector.clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
