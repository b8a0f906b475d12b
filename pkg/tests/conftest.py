"""Shared fixtures.

Hypothesis runs derandomized so the suite is reproducible run to run;
the module oracles in oracles.py carry their own tolerances.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mimap.grid import OccupancyGrid

settings.register_profile(
    "suite",
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(164526)


@pytest.fixture
def make_grid(rng):
    """Factory for random occupancy grids over the full level range."""

    def make(height: int, width: int, resolution: float = 0.1) -> OccupancyGrid:
        levels = rng.integers(0, 101, size=(height, width), dtype=np.uint8)
        return OccupancyGrid(levels, resolution)

    return make


@pytest.fixture(scope="session")
def data_dir() -> Path:
    import mimap

    return Path(mimap.__file__).resolve().parent / "data"
