import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dbarlab.harness import ModeCache
from dbarlab.torus_grid import make_grid
from dbarlab.weights import weight_from_catalog

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def mode_cache():
    """Low-lying spectra shared by every test that needs 64x64 operators."""
    return ModeCache()


@pytest.fixture(scope="session")
def siny64():
    return weight_from_catalog("siny", {}, make_grid(64, 64))


@pytest.fixture(scope="session")
def bump64():
    return weight_from_catalog("bump", {}, make_grid(64, 64))


@pytest.fixture(scope="session")
def siny32():
    return weight_from_catalog("siny", {}, make_grid(32, 32))


@pytest.fixture(scope="session")
def bump32():
    return weight_from_catalog("bump", {}, make_grid(32, 32))


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
