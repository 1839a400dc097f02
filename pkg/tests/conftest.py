import numpy as np
import pytest

from wivision import ArrayGeometry, ChannelConfig, default_geometry


@pytest.fixture
def cfg():
    return ChannelConfig()


@pytest.fixture
def full_geom(cfg):
    """The full 9 rx / 3 tx / 30 subcarrier virtual array (dim 810)."""
    return default_geometry(cfg)


@pytest.fixture
def small_geom(cfg):
    """A small array for cheap eigendecomposition tests (dim 48)."""
    return ArrayGeometry.l_shaped(cfg.wavelength_m / 2.0, arm_x=2, arm_z=2,
                                  n_tx=2, n_subcarriers=8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
