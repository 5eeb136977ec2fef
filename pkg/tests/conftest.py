import numpy as np
import pytest

from xsched.config import NetworkConfig, RunConfig, SafetyConfig, desk_config


@pytest.fixture
def desk_cfg() -> RunConfig:
    return desk_config()


@pytest.fixture
def tiny_cfg() -> RunConfig:
    """Very small scenario for fast unit tests."""
    return RunConfig(
        network=NetworkConfig(num_orus=2, rbgs_per_oru=3, num_users=4,
                              power_levels=4, slots_per_episode=10),
        scheduling_period=5,
        safety=SafetyConfig(),
    ).validate()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
