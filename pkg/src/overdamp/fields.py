"""Coulomb potential of a density by direct convolution with the free-space kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_banded

from .grid import SpatialGrid, check_finite, quad_x

__all__ = [
    "CoulombKernel",
    "FieldState",
    "solve_poisson",
    "electric_energy_diff",
    "hminus1_norm",
    "hminus1_dual_norm",
    "NEGATIVE_DENSITY_TOL",
    "MASS_MATCH_TOL",
]

NEGATIVE_DENSITY_TOL = 1e-12
MASS_MATCH_TOL = 1e-10


@dataclass(frozen=True)
class CoulombKernel:
    """Fundamental solution of ``-Laplace`` in ``d`` dimensions.

    ``d = 1`` is the only dimension with dynamics; ``d = 2, 3`` are provided
    for evaluating functionals.
    """

    d: int = 1

    def __post_init__(self) -> None:
        if self.d not in (1, 2, 3):
            raise ValueError("kernel dimension must be 1, 2 or 3")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        # d > 1: points carry their coordinates on the last axis
        x = np.asarray(x, dtype=float)
        r = np.abs(x) if self.d == 1 else np.linalg.norm(x, axis=-1)
        if self.d == 1:
            return -0.5 * r
        with np.errstate(divide="ignore"):
            if self.d == 2:
                return -np.log(r) / (2.0 * np.pi)
            # normalised by the unit-sphere area d|B(0,1)| so that -Laplace K = delta
            unit_ball = math.pi ** (self.d / 2) / math.gamma(self.d / 2 + 1)
            return 1.0 / (self.d * (self.d - 2) * unit_ball) * r ** (2 - self.d)

    def grad(self, x: np.ndarray) -> np.ndarray:
        """``K'(x) = -sign(x)/2`` with the principal value ``K'(0) = 0``."""
        if self.d != 1:
            raise NotImplementedError("kernel gradient is only used for d = 1")
        return -0.5 * np.sign(np.asarray(x, dtype=float))


@lru_cache(maxsize=16)
def _kernel_matrices(grid: SpatialGrid) -> tuple[np.ndarray, np.ndarray]:
    kernel = CoulombKernel(1)
    diff = grid.x[:, None] - grid.x[None, :]
    pot = grid.dx * kernel(diff)
    grad = grid.dx * kernel.grad(diff)
    pot.flags.writeable = False
    grad.flags.writeable = False
    return pot, grad


@dataclass(frozen=True)
class FieldState:
    grid: SpatialGrid
    phi: np.ndarray
    grad_phi: np.ndarray

    @property
    def electric_energy(self) -> float:
        # finite only on the truncated box: grad_phi -> -+M/2 at infinity
        return quad_x(self.grad_phi**2, self.grid)


def solve_poisson(
    rho: np.ndarray, grid: SpatialGrid, kernel: CoulombKernel | None = None
) -> FieldState:
    """``Phi_i = dx * sum_k K(x_i - x_k) rho_k`` and the matching gradient sum."""
    kernel = kernel or CoulombKernel(1)
    if kernel.d != 1:
        raise NotImplementedError("Poisson dynamics are one-dimensional")
    rho = check_finite(rho, "rho")
    if rho.shape != (grid.n_x,):
        raise ValueError(f"rho must have shape ({grid.n_x},)")
    if rho.min() < -NEGATIVE_DENSITY_TOL:
        i = int(np.argmin(rho))
        raise ValueError(f"negative density {rho[i]:.3e} at cell {i}")
    pot, grad = _kernel_matrices(grid)
    return FieldState(grid, pot @ rho, grad @ rho)


def electric_energy_diff(a: FieldState, b: FieldState) -> float:
    """``int |grad(Phi_a - Phi_b)|^2 dx``."""
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    return quad_x((a.grad_phi - b.grad_phi) ** 2, a.grid)


def _check_masses(rho_a: np.ndarray, rho_b: np.ndarray, grid: SpatialGrid) -> None:
    ma, mb = quad_x(rho_a, grid), quad_x(rho_b, grid)
    if abs(ma - mb) > MASS_MATCH_TOL:
        raise ValueError(
            f"H^-1 distance needs equal masses (got {ma:.12g} vs {mb:.12g})"
        )


def hminus1_norm(rho_a: np.ndarray, rho_b: np.ndarray, grid: SpatialGrid) -> float:
    """``||grad(Phi_a - Phi_b)||_{L^2}``, the computable bound on the H^-1 distance."""
    _check_masses(rho_a, rho_b, grid)
    return math.sqrt(electric_energy_diff(solve_poisson(rho_a, grid), solve_poisson(rho_b, grid)))


def hminus1_dual_norm(rho_a: np.ndarray, rho_b: np.ndarray, grid: SpatialGrid) -> float:
    """Dual H^-1 norm ``sup <psi, rho_a - rho_b>`` over ``||psi||_{H^1} <= 1``.

    Evaluated as ``<g, (I - Laplace)^{-1} g>^{1/2}`` with a three-point
    Laplacian and homogeneous Dirichlet data on the box.  Independent of the
    convolution route, so it can be checked against :func:`hminus1_norm`.
    """
    _check_masses(rho_a, rho_b, grid)
    g = np.asarray(rho_a, dtype=float) - np.asarray(rho_b, dtype=float)
    n, h2 = grid.n_x, grid.dx**2
    ab = np.empty((3, n))
    ab[0, :] = -1.0 / h2
    ab[1, :] = 1.0 + 2.0 / h2
    ab[2, :] = -1.0 / h2
    psi = solve_banded((1, 1), ab, g)
    return math.sqrt(max(quad_x(g * psi, grid), 0.0))
