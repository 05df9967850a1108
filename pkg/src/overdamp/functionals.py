"""Entropies, energies and modulated distances between a kinetic and a fluid state.

Every integral uses the midpoint rules from :mod:`overdamp.grid`.  Audits
return small frozen records carrying the measured quantities together with a
``passed`` flag so that callers decide what to do with a violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .fields import hminus1_dual_norm, solve_poisson
from .fluid import fluid_velocity
from .grid import PhaseGrid, SpatialGrid, check_finite, quad_x, quad_xv
from .kinetic import RHO_FLOOR, ScalingParams, moments

__all__ = [
    "LOG_FLOOR",
    "MINIMIZATION_TOL",
    "L1_TOL",
    "HMINUS1_TOL",
    "xlogx",
    "free_energy_kinetic",
    "kinetic_energy",
    "dissipation",
    "RelativeEntropy",
    "relative_entropy_p",
    "velocity_gap",
    "ModulatedEnergy",
    "modulated_energy",
    "maxwellian_offset",
    "InitialGaps",
    "entropy_gap_initial",
    "MinimizationAudit",
    "minimization_audit",
    "L1Audit",
    "l1_audit",
    "HMinus1Audit",
    "hminus1_audit",
    "DiagnosticsRecord",
    "CSV_COLUMNS",
    "CORE_COLUMNS",
]

LOG_FLOOR = 1e-300
MINIMIZATION_TOL = 1e-8
L1_TOL = 1e-10
HMINUS1_TOL = 1e-12


def xlogx(a: np.ndarray) -> np.ndarray:
    """``a log a`` with ``0 log 0 = 0``."""
    a = np.asarray(a, dtype=float)
    return np.where(a > 0.0, a * np.log(np.maximum(a, LOG_FLOOR)), 0.0)


def kinetic_energy(f: np.ndarray, grid: PhaseGrid) -> float:
    """``iint f |v|^2 / 2``."""
    return 0.5 * quad_xv(f * grid.v[None, :] ** 2, grid)


def free_energy_kinetic(
    f: np.ndarray, grid: PhaseGrid, params: ScalingParams, interaction: float = 0.5
) -> float:
    """``(1/eps) iint f log f + iint f|v|^2/2 + (1/eps) int rho V + (interaction/eps) int Phi rho``."""
    f = check_finite(f, "f")
    eps = params.eps
    rho = moments(f, grid).rho
    total = quad_xv(xlogx(f), grid) / eps + kinetic_energy(f, grid)
    total += quad_x(rho * params.potential(grid.x), grid.spatial) / eps
    if interaction:
        phi = solve_poisson(np.maximum(rho, 0.0), grid.spatial).phi
        total += interaction * quad_x(phi * rho, grid.spatial) / eps
    return total


def dissipation(f: np.ndarray, grid: PhaseGrid, params: ScalingParams) -> float:
    """``iint f |(1/eps) d_v log f - (u - v)|^2``.

    The velocity derivative is taken on ``log f`` (central in the interior,
    second-order one-sided at the ends), which makes the integrand vanish
    identically on sampled Gaussians.  A cell contributes only when it and
    the cells of its stencil all exceed ``RHO_FLOOR * dv``.
    """
    f = check_finite(f, "f")
    eps = params.eps
    u = moments(f, grid).u
    floor = RHO_FLOOR * grid.dv
    logf = np.log(np.maximum(f, LOG_FLOOR))
    dlog = np.gradient(logf, grid.dv, axis=1, edge_order=2)
    ok = f >= floor
    stencil = ok.copy()
    stencil[:, 1:-1] &= ok[:, :-2] & ok[:, 2:]
    stencil[:, 0] &= ok[:, 1] & ok[:, 2]
    stencil[:, -1] &= ok[:, -2] & ok[:, -3]
    resid = dlog / eps - (u[:, None] - grid.v[None, :])
    return quad_xv(np.where(stencil, f * resid**2, 0.0), grid)


@dataclass(frozen=True)
class RelativeEntropy:
    value: float
    cellwise: np.ndarray
    sentinels: int


def relative_entropy_p(rho: np.ndarray, rho_bar: np.ndarray, grid: SpatialGrid) -> RelativeEntropy:
    """``int rho log(rho/rho_bar) - (rho - rho_bar)``.

    Where ``rho_bar`` is below ``RHO_FLOOR`` but ``rho`` is not, the reference
    is clamped to the floor; that cell then carries a large finite value and
    is counted in ``sentinels``.
    """
    rho = np.maximum(check_finite(rho, "rho"), 0.0)
    rho_bar = np.maximum(check_finite(rho_bar, "rho_bar"), 0.0)
    bad = (rho_bar < RHO_FLOOR) & (rho >= RHO_FLOOR)
    ref = np.where(bad, RHO_FLOOR, rho_bar)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio_log = np.where(rho > 0.0, np.log(rho / np.maximum(ref, LOG_FLOOR)), 0.0)
    cell = rho * ratio_log - (rho - ref)
    # round-off can push the Bregman gap a hair below zero near rho = rho_bar
    cell = np.maximum(cell, 0.0)
    return RelativeEntropy(quad_x(cell, grid), cell, int(bad.sum()))


def velocity_gap(rho: np.ndarray, u: np.ndarray, u_bar: np.ndarray, grid: SpatialGrid) -> float:
    """``int rho |u - u_bar|^2``."""
    return quad_x(rho * (u - u_bar) ** 2, grid)


@dataclass(frozen=True)
class ModulatedEnergy:
    kinetic_part: float
    entropy_part: float
    field_part: float
    p_rel: float
    elec_diff: float
    vel_gap: float
    sentinels: int

    @property
    def total(self) -> float:
        return self.kinetic_part + self.entropy_part + self.field_part


def modulated_energy(
    f: np.ndarray,
    rho_bar: np.ndarray,
    grid: PhaseGrid,
    params: ScalingParams,
    u_bar: np.ndarray | None = None,
) -> ModulatedEnergy:
    """``1/2 int rho|u - u_bar|^2 + (1/eps) int p(rho|rho_bar) + (1/2eps) int |grad(Phi - Phi_bar)|^2``.

    ``u_bar`` defaults to the fluid velocity of ``rho_bar``.
    """
    eps = params.eps
    mom = moments(f, grid)
    sx = grid.spatial
    if u_bar is None:
        u_bar = fluid_velocity(rho_bar, sx, params)
    rel = relative_entropy_p(mom.rho, rho_bar, sx)
    field = solve_poisson(np.maximum(mom.rho, 0.0), sx)
    field_bar = solve_poisson(rho_bar, sx)
    elec = quad_x((field.grad_phi - field_bar.grad_phi) ** 2, sx)
    gap = velocity_gap(mom.rho, mom.u, u_bar, sx)
    return ModulatedEnergy(
        kinetic_part=0.5 * gap,
        entropy_part=rel.value / eps,
        field_part=0.5 * elec / eps,
        p_rel=rel.value,
        elec_diff=elec,
        vel_gap=gap,
        sentinels=rel.sentinels,
    )


def maxwellian_offset(mass: float, params: ScalingParams) -> float:
    """``(d / 2eps) log(eps / 2pi) * mass``: the value of ``int K - int E`` at a local Maxwellian."""
    return 0.5 * params.d / params.eps * math.log(params.eps / (2.0 * math.pi)) * mass


def _macro_parts(f: np.ndarray, grid: PhaseGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    mom = moments(f, grid)
    v = grid.v[None, :]
    energy = grid.dv * (f * v**2).sum(axis=1) * 0.5
    ent = grid.dv * xlogx(f).sum(axis=1)
    return mom.rho, mom.u, energy, ent


@dataclass(frozen=True)
class InitialGaps:
    """Initial kinetic-minus-macroscopic gaps.

    ``M0`` pairs ``int f|v|^2/2`` with ``rho|u|^2`` (no half), ``M0_half``
    with ``rho|u|^2/2``.  ``gibbs_excess = M0_half + Mbar0/eps - offset`` is
    the quantity that Gibbs' inequality makes nonnegative.
    """

    M0: float
    M0_half: float
    Mbar0: float
    offset: float
    gibbs_excess: float

    @property
    def M0_nonnegative(self) -> bool:
        return self.M0 >= -MINIMIZATION_TOL

    @property
    def M0_half_nonnegative(self) -> bool:
        return self.M0_half >= -MINIMIZATION_TOL

    @property
    def passed(self) -> bool:
        return self.gibbs_excess >= -MINIMIZATION_TOL


def entropy_gap_initial(f0: np.ndarray, grid: PhaseGrid, params: ScalingParams) -> InitialGaps:
    f0 = check_finite(f0, "f0")
    rho, u, energy, ent = _macro_parts(f0, grid)
    sx = grid.spatial
    m0 = quad_x(energy - rho * u**2, sx)
    m0_half = quad_x(energy - 0.5 * rho * u**2, sx)
    mbar0 = quad_x(ent - xlogx(rho), sx)
    offset = maxwellian_offset(quad_x(rho, sx), params)
    return InitialGaps(m0, m0_half, mbar0, offset, m0_half + mbar0 / params.eps - offset)


@dataclass(frozen=True)
class MinimizationAudit:
    K_int: float
    E_int: float
    offset: float

    @property
    def gap(self) -> float:
        return self.K_int - self.E_int

    @property
    def excess(self) -> float:
        return self.gap - self.offset

    @property
    def passed(self) -> bool:
        return self.excess >= -MINIMIZATION_TOL


def minimization_audit(f: np.ndarray, grid: PhaseGrid, params: ScalingParams) -> MinimizationAudit:
    """Compare ``int K_eps(f)`` with ``int E_eps(U)`` for the moments ``U`` of ``f``.

    ``K_eps = int (f|v|^2/2 + (1/eps) f log f) dv`` and
    ``E_eps = |m|^2/(2 rho) + (1/eps) rho log rho``.  The gap is bounded below
    by the Maxwellian offset, attained at local Maxwellians.
    """
    f = check_finite(f, "f")
    eps = params.eps
    rho, u, energy, ent = _macro_parts(f, grid)
    sx = grid.spatial
    k_int = quad_x(energy + ent / eps, sx)
    e_int = quad_x(0.5 * rho * u**2 + xlogx(rho) / eps, sx)
    return MinimizationAudit(k_int, e_int, maxwellian_offset(quad_x(rho, sx), params))


@dataclass(frozen=True)
class L1Audit:
    l1: float
    p_rel: float
    weighted_l2: float
    sentinels: int

    @property
    def bound(self) -> float:
        return 4.0 * self.p_rel

    @property
    def passed(self) -> bool:
        return self.l1**2 <= self.bound + L1_TOL


def l1_audit(rho: np.ndarray, rho_bar: np.ndarray, grid: SpatialGrid) -> L1Audit:
    """``(int |rho - rho_bar|)^2 <= 4 int p(rho|rho_bar)`` for unit masses.

    ``weighted_l2`` is the middle term ``int min(1/rho, 1/rho_bar)(rho - rho_bar)^2``
    of the chain, reported for inspection.
    """
    rho = np.maximum(check_finite(rho, "rho"), 0.0)
    rho_bar = np.maximum(check_finite(rho_bar, "rho_bar"), 0.0)
    rel = relative_entropy_p(rho, rho_bar, grid)
    top = np.maximum(np.maximum(rho, rho_bar), RHO_FLOOR)
    weighted = quad_x((rho - rho_bar) ** 2 / top, grid)
    return L1Audit(quad_x(np.abs(rho - rho_bar), grid), rel.value, weighted, rel.sentinels)


@dataclass(frozen=True)
class HMinus1Audit:
    dual: float
    field_norm: float
    interface_norm: float

    @property
    def passed(self) -> bool:
        return self.dual <= self.interface_norm + HMINUS1_TOL


def hminus1_audit(rho: np.ndarray, rho_bar: np.ndarray, grid: SpatialGrid) -> HMinus1Audit:
    """Dual ``H^-1`` distance against the field gap ``||grad(Phi - Phi_bar)||``.

    ``field_norm`` uses the cell-centred field; ``interface_norm`` the exact
    cell-interface field ``-(mass left - mass right)/2`` on all ``n_x + 1``
    interfaces, against which summation by parts bounds the dual norm.
    """
    rho = np.asarray(rho, dtype=float)
    rho_bar = np.asarray(rho_bar, dtype=float)
    dual = hminus1_dual_norm(rho, rho_bar, grid)
    g = rho - rho_bar
    fa = solve_poisson(np.maximum(rho, 0.0), grid).grad_phi
    fb = solve_poisson(np.maximum(rho_bar, 0.0), grid).grad_phi
    field = math.sqrt(quad_x((fa - fb) ** 2, grid))
    left = np.concatenate([[0.0], np.cumsum(g)]) * grid.dx
    interface = -(left - (left[-1] - left)) / 2.0
    return HMinus1Audit(dual, field, math.sqrt(grid.dx * float((interface**2).sum())))


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One time sample of a paired kinetic/fluid run.

    The first thirteen fields are the fixed CSV columns; the rest follow in
    declaration order.
    """

    t: float
    mass: float
    momentum: float
    F_eps: float
    D_eps: float
    p_rel: float
    H_eps: float
    elec_diff: float
    L1: float
    vel_gap: float
    K_int: float
    E_int: float
    boundary_mass: float
    fluid_mass: float = math.nan
    kinetic_energy: float = math.nan
    fluid_energy: float = math.nan
    min_excess: float = math.nan
    hminus1_dual: float = math.nan
    hminus1_field: float = math.nan
    vel_gap_integral: float = math.nan
    entropy_residual: float = math.nan
    refined_residual: float = math.nan
    f_min: float = math.nan
    fluid_min: float = math.nan
    sentinels: int = 0

    def __post_init__(self) -> None:
        for name in CORE_COLUMNS:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"diagnostic {name} is not finite")
        for name in ("p_rel", "H_eps", "elec_diff"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"diagnostic {name} is negative")

    def row(self) -> tuple:
        return tuple(getattr(self, name) for name in CSV_COLUMNS)


CSV_COLUMNS: tuple[str, ...] = tuple(f.name for f in dc_fields(DiagnosticsRecord))
CORE_COLUMNS: tuple[str, ...] = CSV_COLUMNS[:13]
