import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_hermitian(rng, M, scale=1.0):
    A = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    return scale * (A + A.conj().T) / 2
