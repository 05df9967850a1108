"""Finite-volume solver for the aggregation-diffusion limit and its rescaled form.

The limit equation is ``d rho/dt = d/dx (d rho/dx + rho d(V + Phi)/dx)`` with
``-Phi'' = rho``.  Fluxes live on cell interfaces and vanish at the two box
ends, so mass is conserved to round-off.

Two interface fluxes are available:

``"sg"``
    Scharfetter-Gummel exponential fitting on the nodal potential
    ``U = V + Phi``.  Its zero-flux states are exactly
    ``log rho + U = const``, which is what the steady-state audit measures.
``"upwind"``
    Upwinded drift plus a plain density difference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.interpolate import PchipInterpolator

from .fields import solve_poisson
from .grid import SpatialGrid, check_finite, grad_x, quad_x
from .kinetic import RHO_FLOOR, CFLError, ScalingParams

__all__ = [
    "FluidState",
    "RescaledState",
    "fluid_velocity",
    "interface_flux",
    "fluid_step",
    "fluid_stable_dt",
    "advance_fluid",
    "free_energy",
    "chemical_potential",
    "rescaled_time",
    "rescaled_step",
    "advance_rescaled",
    "rescaled_grid",
    "map_back",
    "lp_norm_monitor",
    "weighted_norm_monitor",
]

NEGATIVE_TOL = 1e-12


@dataclass
class FluidState:
    grid: SpatialGrid
    rho: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        self.rho = check_finite(self.rho, "rho")
        if self.rho.shape != (self.grid.n_x,):
            raise ValueError(f"rho must have shape ({self.grid.n_x},)")
        if self.rho.min() < -NEGATIVE_TOL:
            raise ValueError(f"negative density at cell {int(np.argmin(self.rho))}")

    @property
    def mass(self) -> float:
        return quad_x(self.rho, self.grid)


@dataclass
class RescaledState:
    """Density ``n`` of the self-similar variables, at rescaled time ``t_bar``."""

    grid: SpatialGrid
    n: np.ndarray
    t_bar: float = 0.0

    @property
    def mass(self) -> float:
        return quad_x(self.n, self.grid)


def _bernoulli(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - 0.5 * z + z * z / 12.0, safe / np.expm1(safe))


def _potential(
    rho: np.ndarray, grid: SpatialGrid, params: ScalingParams | None, strength: float
) -> tuple[np.ndarray, np.ndarray]:
    """Nodal ``U = V + strength * Phi`` and its gradient."""
    u_pot = np.zeros(grid.n_x)
    u_grad = np.zeros(grid.n_x)
    if params is not None:
        u_pot += params.potential(grid.x)
        u_grad += params.potential_grad(grid.x)
    if strength != 0.0:
        fld = solve_poisson(np.maximum(rho, 0.0), grid)
        u_pot += strength * fld.phi
        u_grad += strength * fld.grad_phi
    return u_pot, u_grad


def interface_flux(
    rho: np.ndarray,
    grid: SpatialGrid,
    params: ScalingParams | None,
    scheme: str = "sg",
    strength: float = 1.0,
) -> np.ndarray:
    """Mass flux ``-(rho' + rho U')`` through the ``n_x + 1`` cell interfaces."""
    rho = np.asarray(rho, dtype=float)
    u_pot, u_grad = _potential(rho, grid, params, strength)
    h = grid.dx
    flux = np.zeros(grid.n_x + 1)
    if scheme == "sg":
        du = np.diff(u_pot)
        flux[1:-1] = (_bernoulli(du) * rho[:-1] - _bernoulli(-du) * rho[1:]) / h
    elif scheme == "upwind":
        drift = -0.5 * (u_grad[:-1] + u_grad[1:])
        upwinded = np.where(drift >= 0.0, rho[:-1], rho[1:])
        flux[1:-1] = upwinded * drift - (rho[1:] - rho[:-1]) / h
    else:
        raise ValueError(f"unknown fluid flux {scheme!r}")
    return flux


def fluid_velocity(rho: np.ndarray, grid: SpatialGrid, params: ScalingParams) -> np.ndarray:
    """Nodal ``-(V' + Phi' + (log rho)')``; zero on cells below the density floor."""
    rho = np.asarray(rho, dtype=float)
    _, u_grad = _potential(rho, grid, params, 1.0)
    logr = np.log(np.maximum(rho, RHO_FLOOR))
    vel = -(u_grad + grad_x(logr, grid))
    vel[rho < RHO_FLOOR] = 0.0
    return vel


def fluid_stable_dt(
    rho: np.ndarray,
    grid: SpatialGrid,
    params: ScalingParams | None,
    scheme: str = "sg",
    strength: float = 1.0,
) -> float:
    """Largest explicit step that keeps every update coefficient nonnegative."""
    h = grid.dx
    u_pot, u_grad = _potential(rho, grid, params, strength)
    if scheme == "sg":
        du = np.diff(u_pot)
        out_right = np.concatenate([_bernoulli(du), [0.0]])
        out_left = np.concatenate([[0.0], _bernoulli(-du)])
        return float(h * h / max((out_right + out_left).max(), 1e-300))
    drift = -0.5 * (u_grad[:-1] + u_grad[1:])
    out_right = np.concatenate([np.maximum(drift, 0.0) + 1.0 / h, [0.0]])
    out_left = np.concatenate([[0.0], np.maximum(-drift, 0.0) + 1.0 / h])
    return float(h / (out_right + out_left).max())


def fluid_step(
    rho: np.ndarray,
    grid: SpatialGrid,
    params: ScalingParams | None,
    dt: float,
    scheme: str = "sg",
    strength: float = 1.0,
) -> np.ndarray:
    """Explicit Euler step of the conservative scheme.

    ``params=None`` drops the confinement and ``strength=0`` the interaction;
    together they reduce the scheme to the heat equation.
    """
    limit = fluid_stable_dt(rho, grid, params, scheme, strength)
    if dt > limit * (1.0 + 1e-12):
        raise CFLError(f"fluid step dt={dt:.3e} exceeds explicit limit {limit:.3e}")
    flux = interface_flux(rho, grid, params, scheme, strength)
    out = rho - dt / grid.dx * np.diff(flux)
    if out.min() < -NEGATIVE_TOL:
        i = int(np.argmin(out))
        raise FloatingPointError(f"fluid step produced rho={out[i]:.3e} at cell {i}")
    return np.maximum(out, 0.0)


def advance_fluid(
    rho: np.ndarray,
    grid: SpatialGrid,
    params: ScalingParams | None,
    t0: float,
    t1: float,
    safety: float = 0.9,
    **kw,
) -> Iterator[tuple[float, np.ndarray]]:
    """Yield ``(t, rho)`` after each adaptive step, landing exactly on ``t1``."""
    t = t0
    while t < t1 - 1e-14 * max(1.0, abs(t1)):
        h = min(safety * fluid_stable_dt(rho, grid, params, kw.get("scheme", "sg"), kw.get("strength", 1.0)), t1 - t)
        rho = fluid_step(rho, grid, params, h, **kw)
        t = t1 if h == t1 - t else t + h
        yield t, rho


def chemical_potential(rho: np.ndarray, grid: SpatialGrid, params: ScalingParams) -> np.ndarray:
    """Nodal ``log rho + V + Phi`` (first variation of the free energy)."""
    u_pot, _ = _potential(rho, grid, params, 1.0)
    return np.log(np.maximum(rho, RHO_FLOOR)) + u_pot


def free_energy(
    rho: np.ndarray,
    grid: SpatialGrid,
    params: ScalingParams | None,
    interaction: float = 0.5,
) -> float:
    """``int rho log rho + int V rho + interaction * int Phi rho`` with ``0 log 0 = 0``.

    ``interaction`` is the prefactor of the Coulomb term (``0.5`` for the true
    energy, ``0`` to switch the interaction off).
    """
    rho = check_finite(rho, "rho")
    ent = np.where(rho > 0.0, rho * np.log(np.maximum(rho, 1e-300)), 0.0)
    total = quad_x(ent, grid)
    if params is not None:
        total += quad_x(params.potential(grid.x) * rho, grid)
    if interaction:
        total += interaction * quad_x(solve_poisson(rho, grid).phi * rho, grid)
    return total


# -- self-similar variables ------------------------------------------------


def rescaled_time(t: float) -> float:
    """``t_bar = (e^{2t} - 1)/2``."""
    return 0.5 * math.expm1(2.0 * t)


def _interaction_strength(t_bar: float, d: int) -> float:
    return (2.0 * t_bar + 1.0) ** ((d - 2) / 2)


def rescaled_grid(grid: SpatialGrid, t: float) -> SpatialGrid:
    """Box for ``n`` whose cells are the images of ``grid`` cells at time ``t``."""
    s = math.exp(t)
    return SpatialGrid(s * grid.x_min, s * grid.x_max, grid.n_x)


def _require_confined(params: ScalingParams) -> None:
    if not params.confined:
        raise ValueError("the self-similar change of variables needs V = |x|^2/2")


def rescaled_step(
    n: np.ndarray,
    t_bar: float,
    dt_bar: float,
    grid: SpatialGrid,
    params: ScalingParams,
    scheme: str = "sg",
) -> np.ndarray:
    """``dn/dt = n'' + (2t+1)^{(d-2)/2} (n Psi')'`` with ``-Psi'' = n``, no confinement."""
    _require_confined(params)
    strength = _interaction_strength(t_bar, params.d)
    return fluid_step(n, grid, None, dt_bar, scheme=scheme, strength=strength)


def advance_rescaled(
    n: np.ndarray,
    grid: SpatialGrid,
    params: ScalingParams,
    t_bar0: float,
    t_bar1: float,
    safety: float = 0.9,
    scheme: str = "sg",
) -> Iterator[tuple[float, np.ndarray]]:
    _require_confined(params)
    t = t_bar0
    while t < t_bar1 - 1e-14 * max(1.0, t_bar1):
        strength = _interaction_strength(t, params.d)
        h = min(safety * fluid_stable_dt(n, grid, None, scheme, strength), t_bar1 - t)
        n = rescaled_step(n, t, h, grid, params, scheme)
        t = t_bar1 if h == t_bar1 - t else t + h
        yield t, n


def map_back(
    n: np.ndarray, n_grid: SpatialGrid, t: float, grid: SpatialGrid, d: int = 1
) -> FluidState:
    """``rho(x, t) = e^{dt} n(e^t x, t_bar(t))`` as cell averages on ``grid``.

    The cumulative mass of ``n`` is interpolated monotonically (PCHIP) and
    differenced over the image of every target cell, which keeps the result
    nonnegative and conserves the mass that falls inside the box.
    """
    if d != 1:
        raise NotImplementedError("map_back is implemented for d = 1")
    n = np.asarray(n, dtype=float)
    cdf = np.concatenate([[0.0], np.cumsum(n) * n_grid.dx])
    interp = PchipInterpolator(n_grid.edges, cdf, extrapolate=False)
    images = np.clip(math.exp(t) * grid.edges, n_grid.edges[0], n_grid.edges[-1])
    mass = interp(images)
    rho = np.maximum(np.diff(mass), 0.0) / grid.dx
    return FluidState(grid, rho, t)


# -- monitors --------------------------------------------------------------


def lp_norm_monitor(values: np.ndarray, grid: SpatialGrid, p: float) -> float:
    """Discrete ``L^p`` norm, ``1 <= p <= inf``."""
    if not p >= 1.0:
        raise ValueError("p must lie in [1, inf]")
    a = np.abs(check_finite(values))
    if math.isinf(p):
        return float(a.max())
    return quad_x(a**p, grid) ** (1.0 / p)


def weighted_norm_monitor(values: np.ndarray, grid: SpatialGrid, k: int, r: float) -> float:
    """``sum_{j<=k} sup_x (1 + x^2)^{r/2} |d^j f/dx^j|`` with derivatives by ``grad_x``."""
    if k not in (0, 1, 2, 3):
        raise ValueError("k must be 0, 1, 2 or 3")
    weight = (1.0 + grid.x**2) ** (0.5 * r)
    deriv = check_finite(values)
    total = 0.0
    for j in range(k + 1):
        if j:
            deriv = grad_x(deriv, grid)
        total += float(np.max(weight * np.abs(deriv)))
    return total
