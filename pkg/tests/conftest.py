import numpy as np
import pytest
from hypothesis import settings

from cqed_stirap.hamiltonian import ModelParams

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

SCAN_GRID = np.linspace(0.0, 6.0606, 200)


@pytest.fixture(scope="session")
def scan_grid():
    return SCAN_GRID


@pytest.fixture(scope="session")
def params_g02():
    return ModelParams(N=20, g_c=0.2)


@pytest.fixture(scope="session")
def params_g01():
    return ModelParams(N=20, g_c=0.1)
