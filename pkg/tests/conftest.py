import numpy as np
import pytest

from ctcart.data import Dataset, uniform_grid
from ctcart.oracle import toy_prior, toy_problem


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_data(rng):
    """10 observations, 2 variables, small grids; permissive node size."""
    X = rng.uniform(0.05, 0.95, size=(10, 2))
    y = rng.standard_normal(10)
    grids = [uniform_grid(5), uniform_grid(4)]
    return Dataset(features=X, response=y, cutpoint_grids=grids, min_node_size=1)


@pytest.fixture
def toy():
    """The enumerable one-variable problem used by the oracle checks."""
    return toy_problem()


@pytest.fixture
def toy_cfg(toy):
    return toy_prior(toy)
