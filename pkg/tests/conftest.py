import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid31():
    from biharmonic_ip.grid import GridDomain

    return GridDomain(31)


@pytest.fixture(scope="session")
def tests31(grid31):
    from biharmonic_ip.reconstruct import random_test_functions

    return random_test_functions(grid31, 4, 0)
