import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tokenmark.core import Codebook, WatermarkParams, make_rar_schedule, make_var_schedule
from tokenmark.embed import SyntheticModel

settings.register_profile(
    "ci",
    derandomize=True,
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def codebook():
    return Codebook(4096)


@pytest.fixture(scope="session")
def small_codebook():
    return Codebook(64)


@pytest.fixture(scope="session")
def var_schedule():
    return make_var_schedule()


@pytest.fixture(scope="session")
def rar680():
    return make_rar_schedule(680)


@pytest.fixture(scope="session")
def params():
    return WatermarkParams(gamma=0.25, delta=2.0, tau=4.0, initial_seed=42)


@pytest.fixture(scope="session")
def model(codebook):
    return SyntheticModel(model_seed=2024, vocab_size=codebook.size)


@pytest.fixture(scope="session")
def small_model(small_codebook):
    return SyntheticModel(model_seed=11, vocab_size=small_codebook.size)


def rng_tokens(seed, shape, vocab):
    return np.random.default_rng(seed).integers(0, vocab, size=shape).astype(np.int32)
