import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qabsorb.library import (
    amplitude_damping,
    gamblers_ruin,
    identity_channel,
    three_level_absorber,
)

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def absorber():
    return three_level_absorber()


@pytest.fixture
def damping():
    return amplitude_damping(0.5)


@pytest.fixture
def ident2():
    return identity_channel(2)


@pytest.fixture
def ruin():
    return gamblers_ruin(5)


def random_matrix(rng, d, hermitian=False):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return a + a.conj().T if hermitian else a


def random_state(rng, d):
    g = random_matrix(rng, d)
    rho = g @ g.conj().T
    return rho / np.trace(rho).real
