"""Uniform phase-space meshes, midpoint quadrature and central differences.

All integrals in the package go through :func:`quad_x`, :func:`quad_v` and
:func:`quad_xv` so that the discrete mass, entropy and energy functionals use
one consistent rule (cell averages times cell width).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "SpatialGrid",
    "VelocityGrid",
    "PhaseGrid",
    "check_finite",
    "quad_x",
    "quad_v",
    "quad_xv",
    "grad_x",
    "boundary_mass",
]


def check_finite(values: np.ndarray, name: str = "values") -> np.ndarray:
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        where = idx[0] if len(idx) == 1 else idx
        raise ValueError(f"{name} has a non-finite entry at index {where}")
    return values


@dataclass(frozen=True)
class SpatialGrid:
    """Cell-centred uniform grid on ``[x_min, x_max]``."""

    x_min: float
    x_max: float
    n_x: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)):
            raise ValueError("grid bounds must be finite")
        if not self.x_min < 0.0 < self.x_max:
            raise ValueError("spatial box must contain the origin (x_min < 0 < x_max)")
        if int(self.n_x) != self.n_x or self.n_x < 8:
            raise ValueError("n_x must be an integer >= 8")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_x

    @cached_property
    def edges(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_x + 1)

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * (np.arange(self.n_x) + 0.5)

    def refined(self, factor: int = 2) -> "SpatialGrid":
        return SpatialGrid(self.x_min, self.x_max, self.n_x * factor)


@dataclass(frozen=True)
class VelocityGrid:
    """Symmetric cell-centred velocity grid on ``[-v_max, v_max]``."""

    v_max: float
    n_v: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.v_max) and self.v_max > 0.0):
            raise ValueError("v_max must be positive and finite")
        if int(self.n_v) != self.n_v or self.n_v < 8:
            raise ValueError("n_v must be an integer >= 8")

    @classmethod
    def for_scaling(
        cls, eps: float, n_v: int, c_v: float = 7.0, shift: float = 0.0
    ) -> "VelocityGrid":
        """Grid wide enough for a Maxwellian of variance ``1/eps`` centred
        anywhere in ``[-shift, shift]``."""
        if c_v < 4.0:
            raise ValueError("c_v must be >= 4 to resolve the Maxwellian tails")
        return cls(c_v / np.sqrt(eps) + abs(shift), n_v)

    def resolves(self, eps: float, c_v: float = 4.0) -> bool:
        return self.v_max >= c_v / np.sqrt(eps)

    @property
    def dv(self) -> float:
        return 2.0 * self.v_max / self.n_v

    @cached_property
    def edges(self) -> np.ndarray:
        return -self.v_max + self.dv * np.arange(self.n_v + 1)

    @cached_property
    def v(self) -> np.ndarray:
        return -self.v_max + self.dv * (np.arange(self.n_v) + 0.5)


@dataclass(frozen=True)
class PhaseGrid:
    spatial: SpatialGrid
    velocity: VelocityGrid

    @property
    def shape(self) -> tuple[int, int]:
        return (self.spatial.n_x, self.velocity.n_v)

    @property
    def size(self) -> int:
        return self.spatial.n_x * self.velocity.n_v

    @property
    def x(self) -> np.ndarray:
        return self.spatial.x

    @property
    def v(self) -> np.ndarray:
        return self.velocity.v

    @property
    def dx(self) -> float:
        return self.spatial.dx

    @property
    def dv(self) -> float:
        return self.velocity.dv


def quad_x(values: np.ndarray, grid: SpatialGrid | PhaseGrid) -> float:
    """Midpoint rule ``dx * sum(values)`` over the spatial grid."""
    values = check_finite(values)
    n_x = grid.spatial.n_x if isinstance(grid, PhaseGrid) else grid.n_x
    if values.shape != (n_x,):
        raise ValueError(f"expected shape ({n_x},), got {values.shape}")
    return float(grid.dx * values.sum())


def quad_v(values: np.ndarray, grid: VelocityGrid | PhaseGrid) -> np.ndarray:
    """Velocity integral of a phase-space array (or of a single column)."""
    values = np.asarray(values, dtype=float)
    return grid.dv * values.sum(axis=-1)


def quad_xv(values: np.ndarray, grid: PhaseGrid) -> float:
    values = check_finite(values)
    if values.shape != grid.shape:
        raise ValueError(f"expected shape {grid.shape}, got {values.shape}")
    return float(grid.dx * grid.dv * values.sum())


def grad_x(values: np.ndarray, grid: SpatialGrid | PhaseGrid) -> np.ndarray:
    """Second-order central differences; first-order one-sided at the ends.

    The two-point end stencils make ``quad_x(grad_x(f))`` telescope to
    boundary values only, exactly, whenever ``f`` vanishes in the two
    outermost cells at each end.
    """
    values = check_finite(values)
    if values.shape[0] < 3:
        raise ValueError("grad_x needs at least 3 nodes")
    h = grid.dx
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * h)
    out[0] = (values[1] - values[0]) / h
    out[-1] = (values[-1] - values[-2]) / h
    return out


def boundary_mass(rho: np.ndarray, grid: SpatialGrid | PhaseGrid, cells: int = 2) -> float:
    """Mass held in the ``cells`` outermost cells at each end of the box."""
    rho = np.asarray(rho, dtype=float)
    return float(grid.dx * (rho[:cells].sum() + rho[-cells:].sum()))
