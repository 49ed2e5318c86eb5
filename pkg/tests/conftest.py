"""Shared fixtures: small procedural scenes reused across the suite."""

import numpy as np
import pytest

from hlfstereo import bench
from hlfstereo.config import Params


@pytest.fixture(scope="session")
def params():
    return Params()


@pytest.fixture(scope="session")
def tiny_scene():
    """3x3 grid, 40x44, both planes on label values (0.5 steps over [0,3])."""
    return bench.two_plane_scene(seed=11, height=40, width=44, grid=(3, 3),
                                 d_bg=1.0, d_fg=2.5,
                                 disparity_range=(0.0, 3.0), label_count=7)


@pytest.fixture(scope="session")
def plane_scene():
    """Single fronto-parallel plane at d=2, used as a rendering oracle."""
    return bench.two_plane_scene(seed=4, height=48, width=52, grid=(3, 3),
                                 d_bg=2.0, disparity_range=(0.0, 4.0),
                                 label_count=9, foreground=False)


@pytest.fixture(scope="session")
def full_grid_scene():
    """Full 5x6 grid with the 30-band ladder at small spatial size."""
    return bench.two_plane_scene(seed=2, height=40, width=40, grid=(5, 6),
                                 d_bg=1.0, d_fg=2.0,
                                 disparity_range=(0.0, 2.0), label_count=5)


@pytest.fixture(scope="session")
def rng():
    def make(seed):
        return np.random.default_rng(seed)
    return make
