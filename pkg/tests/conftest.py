import numpy as np
import pytest

from holobeam.harness import DESK, build_scenario
from holobeam.idet_optimizer import build_channels
from holobeam.geometry_em import MediumParams


@pytest.fixture(scope="session")
def medium():
    return MediumParams(10e9)


@pytest.fixture(scope="session")
def desk_scenario():
    return build_scenario(dict(DESK))


@pytest.fixture(scope="session")
def desk_channels(desk_scenario):
    return build_channels(desk_scenario)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
