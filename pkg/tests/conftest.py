import pytest

from columnbench.grid import MoistureConfig, build_grid, init_state
from columnbench.microphysics import warmup


@pytest.fixture(scope="session", autouse=True)
def compiled():
    warmup()


@pytest.fixture
def warm_state():
    return init_state(build_grid(8, 6, 30), MoistureConfig.warm(), 0.4, 11)


@pytest.fixture
def cold_state():
    return init_state(build_grid(8, 6, 30), MoistureConfig.cold(), 0.4, 11)
