import numpy as np
import pytest

from steptwo import groups as G
from steptwo import heatkernel as hk


@pytest.fixture(scope="session")
def h1():
    return G.heisenberg(1)


@pytest.fixture(scope="session")
def h2():
    return G.heisenberg(2)


@pytest.fixture(scope="session")
def h42():
    return G.htype(4, 2)


@pytest.fixture(scope="session")
def n32spec():
    return G.n32()


@pytest.fixture(scope="session")
def model_h1(h1):
    return hk.oscillatory_model(h1)


@pytest.fixture(scope="session")
def model_h2(h2):
    return hk.oscillatory_model(h2)


@pytest.fixture(scope="session")
def model_h42(h42):
    return hk.oscillatory_model(h42)


def rand_points(spec, n, seed, scale=2.0):
    rng = np.random.default_rng(seed)
    return G.GroupPoint(rng.uniform(-scale, scale, size=(n, spec.q)),
                        rng.uniform(-scale, scale, size=(n, spec.m)))
