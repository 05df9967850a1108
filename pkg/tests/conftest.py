from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from overdamp.grid import PhaseGrid, SpatialGrid, VelocityGrid
from overdamp.kinetic import ScalingParams

settings.register_profile(
    "overdamp", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("overdamp")


def gaussian(x: np.ndarray, mean: float = 0.0, var: float = 1.0) -> np.ndarray:
    return np.exp(-((x - mean) ** 2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)


@pytest.fixture
def params() -> ScalingParams:
    return ScalingParams(0.2, 2.0, True)


@pytest.fixture
def phase_grid() -> PhaseGrid:
    return PhaseGrid(SpatialGrid(-8.0, 8.0, 64), VelocityGrid.for_scaling(0.2, 64, 7.0, 1.0))
