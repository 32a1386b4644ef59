import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def gaussian_1d():
    from santalo_lab.numgrid import BoxGrid, build_grid_fn
    g = BoxGrid.cube(1, 6.0, 512)
    return build_grid_fn(lambda p: 0.5 * np.sum(p ** 2, axis=-1), g)


@pytest.fixture(scope="session")
def gaussian_2d():
    from santalo_lab.numgrid import BoxGrid, build_grid_fn
    g = BoxGrid.cube(2, 6.0, 192)
    return build_grid_fn(lambda p: 0.5 * np.sum(p ** 2, axis=-1), g)
