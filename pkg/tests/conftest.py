import numpy as np
import pytest

from fedad.rng import substream
from fedad.scenario import ScenarioConfig, build_scenario


@pytest.fixture
def small_config():
    return ScenarioConfig(
        num_aps=4,
        antennas_per_ap=2,
        num_devices=10,
        pilot_len=8,
        hidden_units=16,
        cluster_size=2,
        master_seed=11,
    )


@pytest.fixture
def small_artifacts(small_config):
    return build_scenario(small_config)


@pytest.fixture
def stream():
    def make(*labels):
        return substream(1234, *labels)

    return make


def relative_error(a, b):
    denom = max(abs(a), abs(b), 1e-300)
    return abs(a - b) / denom


def complex_gaussian(rng: np.random.Generator, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
