import warnings

import numpy as np
import pytest

from lamelab.besov import BoundaryLeakageWarning
from lamelab.grid import Grid
from lamelab.operators import LameParams


@pytest.fixture(scope="session")
def grid32():
    return Grid(2, 32, 16.0)


@pytest.fixture(scope="session")
def grid64():
    return Grid(2, 64, 16.0)


@pytest.fixture(scope="session")
def params():
    return LameParams(1.0, 1.0)


@pytest.fixture
def quiet_leakage():
    """Silence the resolution warning where a test intentionally runs coarse."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BoundaryLeakageWarning)
        yield


def rng_field(grid, seed, ncomp=None):
    """White-noise nodal field (for transform round-trip properties)."""
    rng = np.random.default_rng(seed)
    shape = grid.shape if ncomp is None else (ncomp,) + grid.shape
    return rng.standard_normal(shape)
