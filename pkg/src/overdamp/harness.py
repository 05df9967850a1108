"""Paired kinetic/fluid runs over a sweep of epsilon and log-log rate fits.

A pair run starts the kinetic solver from well-prepared data (the fluid
density times a local Maxwellian centred on the fluid velocity) and advances
both solvers in lockstep.  Every kinetic step feeds the time integrals of the
entropy audits and of the velocity gap; every sample time produces a
:class:`DiagnosticsRecord` and runs the audits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fluid import (
    FluidState,
    advance_fluid,
    advance_rescaled,
    chemical_potential,
    fluid_velocity,
    free_energy,
    lp_norm_monitor,
    map_back,
    rescaled_grid,
    rescaled_time,
    weighted_norm_monitor,
)
from .functionals import (
    DiagnosticsRecord,
    InitialGaps,
    dissipation,
    entropy_gap_initial,
    free_energy_kinetic,
    hminus1_audit,
    kinetic_energy,
    l1_audit,
    minimization_audit,
    modulated_energy,
)
from .grid import PhaseGrid, SpatialGrid, VelocityGrid, boundary_mass, quad_v, quad_x, quad_xv
from .kinetic import (
    CFLError,
    KineticState,
    ScalingParams,
    StepInfo,
    local_maxwellian,
    moments,
    stable_dt,
    vpfp_step,
)

__all__ = [
    "DEFAULT_EPS",
    "PRIMARY_QUANTITIES",
    "RATE_SLOPE_MIN",
    "RATE_RESIDUAL_MAX",
    "GridPolicy",
    "InitialRecipe",
    "ExperimentPlan",
    "RateFit",
    "PairRun",
    "SweepResult",
    "Calibration",
    "well_prepared_data",
    "run_pair",
    "fit_rate",
    "fit_rates",
    "calibrate_bound",
    "run_sweep",
    "SeriesRun",
    "run_fluid",
    "run_rescaled",
    "chemical_potential_variation",
]

DEFAULT_EPS = (0.4, 0.283, 0.2, 0.141, 0.1)
PRIMARY_QUANTITIES = ("p_rel", "elec_diff", "vel_gap_integral")
RATE_SLOPE_MIN = 0.7
RATE_RESIDUAL_MAX = 0.15
RATE_FLOOR = 1e-16

MASS_TOL = 1e-8
BOUNDARY_TOL = 1e-8
ENTROPY_REL_TOL = 0.01
FLUID_ENERGY_TOL = 1e-10
WEIGHTED_GROWTH = 10.0


@dataclass(frozen=True)
class GridPolicy:
    """How grids and steps are chosen for each epsilon.

    ``n_v`` is held fixed while ``v_max = c_v/sqrt(eps) + max|u0|``, so the
    velocity cell width measured in thermal units stays roughly constant.
    """

    n_x: int = 128
    n_v: int = 128
    half_width: float = 8.0
    c_v: float = 7.0
    dt_safety: float = 0.5
    transport: str = "vanleer"
    fluid_scheme: str = "sg"

    def spatial(self) -> SpatialGrid:
        return SpatialGrid(-self.half_width, self.half_width, self.n_x)


@dataclass(frozen=True)
class InitialRecipe:
    """Initial fluid density: ``"gaussian"`` at ``centre`` or a ``"bimodal"`` pair at ``+-centre``."""

    kind: str = "gaussian"
    centre: float = 0.5
    width: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "bimodal"):
            raise ValueError(f"unknown initial-data recipe {self.kind!r}")
        if not self.width > 0.0:
            raise ValueError("initial width must be positive")

    def density(self, grid: SpatialGrid) -> np.ndarray:
        x, w = grid.x, self.width
        if self.kind == "gaussian":
            rho = np.exp(-0.5 * ((x - self.centre) / w) ** 2)
        else:
            rho = np.exp(-0.5 * ((x - self.centre) / w) ** 2) + np.exp(-0.5 * ((x + self.centre) / w) ** 2)
        return rho / quad_x(rho, grid)


@dataclass(frozen=True)
class ExperimentPlan:
    eps_values: tuple[float, ...] = DEFAULT_EPS
    delta: float = 2.0
    confined: bool = True
    T: float = 0.5
    policy: GridPolicy = GridPolicy()
    recipe: InitialRecipe = InitialRecipe()
    n_samples: int = 10

    def __post_init__(self) -> None:
        eps = tuple(float(e) for e in self.eps_values)
        object.__setattr__(self, "eps_values", eps)
        if not eps:
            raise ValueError("the sweep needs at least one epsilon")
        for e in eps:
            if not 0.0 < e < 1.0:
                raise ValueError("epsilon must lie in (0,1)")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon values must be strictly decreasing")
        if not self.T > 0.0:
            raise ValueError("horizon T must be positive")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        self.params(eps[0])  # validates delta

    def params(self, eps: float) -> ScalingParams:
        return ScalingParams(eps, self.delta, self.confined)

    @property
    def zeta(self) -> float:
        return self.params(self.eps_values[0]).zeta


def well_prepared_data(
    rho_bar0: FluidState,
    params: ScalingParams,
    velocity: VelocityGrid | None = None,
    n_v: int = 128,
    c_v: float = 7.0,
) -> KineticState:
    """``f0 = rho_bar0(x) M_{u_bar0(x)}(v)`` with ``u_bar0`` from the fluid velocity law.

    Without an explicit ``velocity`` grid one is built wide enough for the
    shifted Maxwellians.  A given grid is rejected when ``|u_bar0|`` exceeds
    ``v_max/2`` on a cell carrying mass.
    """
    sx = rho_bar0.grid
    rho = rho_bar0.rho
    u_bar = fluid_velocity(rho, sx, params)
    shift = float(np.abs(u_bar).max())
    if velocity is None:
        velocity = VelocityGrid.for_scaling(params.eps, n_v, c_v, shift)
    elif shift > 0.5 * velocity.v_max:
        i = int(np.argmax(np.abs(u_bar)))
        raise ValueError(
            f"initial fluid velocity {u_bar[i]:.3g} at cell {i} exceeds v_max/2 = {0.5 * velocity.v_max:.3g}"
        )
    grid = PhaseGrid(sx, velocity)
    return KineticState(grid, local_maxwellian(rho, u_bar, params.eps, grid), rho_bar0.t)


@dataclass
class PairRun:
    eps: float
    params: ScalingParams
    grid: PhaseGrid
    gaps: InitialGaps
    records: list[DiagnosticsRecord] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    error: str | None = None
    steps: int = 0
    dt: float = math.nan
    entropy_abs_residual: float = 0.0
    f: np.ndarray | None = None
    rho_bar: np.ndarray | None = None

    @property
    def completed(self) -> bool:
        return self.error is None

    @property
    def passed(self) -> bool:
        return self.completed and not self.failures

    @property
    def last_valid_t(self) -> float:
        return self.records[-1].t if self.records else math.nan

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def terminal(self, name: str) -> float:
        return float(self.series(name)[-1])

    def sup(self, name: str) -> float:
        return float(self.series(name).max())


class _Accumulator:
    """Trapezoidal time integrals of the per-step entropy and gap terms."""

    def __init__(self, values: dict[str, float]) -> None:
        self.prev = values
        self.total = {k: 0.0 for k in values}

    def add(self, values: dict[str, float], dt: float) -> None:
        for k, v in values.items():
            self.total[k] += 0.5 * dt * (self.prev[k] + v)
        self.prev = values


def _step_terms(f: np.ndarray, rho_bar: np.ndarray, grid: PhaseGrid, params: ScalingParams) -> dict[str, float]:
    mom = moments(f, grid)
    return {
        "F": free_energy_kinetic(f, grid, params),
        "D": dissipation(f, grid, params),
        "v2": 2.0 * kinetic_energy(f, grid),
        "ru2": quad_x(mom.rho * mom.u**2, grid.spatial),
        "gap": modulated_energy(f, rho_bar, grid, params).vel_gap,
    }


def run_pair(
    plan: ExperimentPlan,
    eps: float,
    on_sample: Callable[[DiagnosticsRecord, np.ndarray, np.ndarray, PhaseGrid], None] | None = None,
) -> PairRun:
    """Advance the kinetic and fluid solvers to ``plan.T`` and audit every sample.

    Numerical errors (CFL, positivity, boundary mass) stop the run; ``error``
    then holds the reason and ``records`` end with the last valid sample.
    """
    params = plan.params(eps)
    pol = plan.policy
    sx = pol.spatial()
    fluid0 = FluidState(sx, plan.recipe.density(sx))
    kin0 = well_prepared_data(fluid0, params, n_v=pol.n_v, c_v=pol.c_v)
    grid = kin0.grid
    f, rho_bar = kin0.f, fluid0.rho.copy()
    run = PairRun(eps, params, grid, entropy_gap_initial(f, grid, params))
    if not run.gaps.passed:
        run.failures.append(f"initial Gibbs excess {run.gaps.gibbs_excess:.3e} is negative")

    mass0, fluid_mass0 = quad_xv(f, grid), fluid0.mass
    interval = plan.T / plan.n_samples
    per_sample = max(1, math.ceil(interval / stable_dt(grid, params, mass0, pol.dt_safety)))
    dt = interval / per_sample
    run.dt = dt
    eps2 = params.eps**-2
    stiff = params.relaxation_rate

    terms0 = _step_terms(f, rho_bar, grid, params)
    acc = _Accumulator(terms0)
    F0 = terms0["F"]
    weighted0 = weighted_norm_monitor(rho_bar, sx, 0, 2.0)
    fluid_e = free_energy(rho_bar, sx, params)

    def record(t: float) -> DiagnosticsRecord:
        mom = moments(f, grid)
        mod = modulated_energy(f, rho_bar, grid, params)
        mini = minimization_audit(f, grid, params)
        l1 = l1_audit(mom.rho, rho_bar, sx)
        hm = hminus1_audit(mom.rho, rho_bar, sx)
        cur = acc.prev
        tot = acc.total
        r1 = cur["F"] - F0 + stiff * tot["D"] + tot["v2"] / params.eps - params.d * eps2 * t
        r2 = (
            cur["F"] - F0 + 0.5 * stiff * tot["D"] + tot["ru2"] / params.eps
            - 0.5 * params.eps**params.delta * tot["v2"]
        )
        rec = DiagnosticsRecord(
            t=t,
            mass=quad_xv(f, grid),
            momentum=quad_x(mom.m, sx),
            F_eps=cur["F"],
            D_eps=cur["D"],
            p_rel=mod.p_rel,
            H_eps=mod.total,
            elec_diff=mod.elec_diff,
            L1=l1.l1,
            vel_gap=mod.vel_gap,
            K_int=mini.K_int,
            E_int=mini.E_int,
            boundary_mass=max(boundary_mass(mom.rho, sx), boundary_mass(rho_bar, sx)),
            fluid_mass=quad_x(rho_bar, sx),
            kinetic_energy=0.5 * cur["v2"],
            fluid_energy=fluid_e,
            min_excess=mini.excess,
            hminus1_dual=hm.dual,
            hminus1_field=hm.field_norm,
            vel_gap_integral=tot["gap"],
            entropy_residual=r1,
            refined_residual=r2,
            f_min=float(f.min()),
            fluid_min=float(rho_bar.min()),
            sentinels=mod.sentinels,
        )
        _audit(run, rec, l1.passed, hm.passed, mass0, fluid_mass0, eps2)
        if weighted_norm_monitor(rho_bar, sx, 0, 2.0) > WEIGHTED_GROWTH * weighted0:
            run.flags.append(f"t={t:.6g}: weighted norm grew beyond {WEIGHTED_GROWTH:g}x")
        run.entropy_abs_residual = max(run.entropy_abs_residual, abs(r1))
        return rec

    run.records.append(record(0.0))
    if on_sample is not None:
        on_sample(run.records[-1], f, rho_bar, grid)
    t = 0.0
    try:
        for k in range(1, plan.n_samples * per_sample + 1):
            t_next = plan.T if k == plan.n_samples * per_sample else k * dt
            h = t_next - t
            info = StepInfo()
            f = vpfp_step(f, grid, params, h, transport=pol.transport, info=info)
            for _, rho_bar in advance_fluid(rho_bar, sx, params, t, t_next, scheme=pol.fluid_scheme):
                e = free_energy(rho_bar, sx, params)
                if e > fluid_e + FLUID_ENERGY_TOL:
                    run.failures.append(f"t={t:.6g}: fluid free energy rose by {e - fluid_e:.3e}")
                fluid_e = e
            t = t_next
            run.steps = k
            bm = max(boundary_mass(quad_v(f, grid), sx), boundary_mass(rho_bar, sx))
            if bm > BOUNDARY_TOL * mass0:
                raise FloatingPointError(f"boundary mass {bm:.3e} exceeds {BOUNDARY_TOL:g} of the total")
            acc.add(_step_terms(f, rho_bar, grid, params), h)
            if k % per_sample == 0:
                rec = record(t)
                run.records.append(rec)
                if on_sample is not None:
                    on_sample(rec, f, rho_bar, grid)
    except (CFLError, FloatingPointError, ValueError) as exc:
        run.error = f"{type(exc).__name__} at t={t:.6g}: {exc}"
    run.f, run.rho_bar = f, rho_bar
    return run


def _audit(
    run: PairRun,
    rec: DiagnosticsRecord,
    l1_ok: bool,
    hm_ok: bool,
    mass0: float,
    fluid_mass0: float,
    eps2: float,
) -> None:
    t = rec.t
    fail = run.failures

    def check(ok: bool, msg: str) -> None:
        if not ok:
            fail.append(f"t={t:.6g}: {msg}")

    check(abs(rec.mass - mass0) <= MASS_TOL, f"kinetic mass drift {rec.mass - mass0:.3e}")
    check(abs(rec.fluid_mass - fluid_mass0) <= MASS_TOL, f"fluid mass drift {rec.fluid_mass - fluid_mass0:.3e}")
    check(rec.f_min >= 0.0, f"negative f {rec.f_min:.3e}")
    check(rec.fluid_min >= 0.0, f"negative fluid density {rec.fluid_min:.3e}")
    check(rec.min_excess >= -1e-8, f"minimization excess {rec.min_excess:.3e}")
    check(l1_ok, f"L1 bound violated (L1^2={rec.L1**2:.3e}, 4p={4 * rec.p_rel:.3e})")
    check(hm_ok, "dual H^-1 distance exceeds the field gap")
    slack = ENTROPY_REL_TOL * eps2 * t
    check(rec.entropy_residual <= slack, f"free-energy inequality residual {rec.entropy_residual:.3e}")
    check(rec.refined_residual <= slack, f"refined free-energy residual {rec.refined_residual:.3e}")


@dataclass(frozen=True)
class RateFit:
    name: str
    eps: tuple[float, ...]
    values: tuple[float, ...]
    slope: float
    intercept: float
    residual: float
    floored: bool = False

    def meets(self, min_slope: float = RATE_SLOPE_MIN, max_residual: float = RATE_RESIDUAL_MAX) -> bool:
        return self.slope >= min_slope and self.residual <= max_residual

    def monotone(self, tol: float = 0.1) -> bool:
        """Non-increasing as epsilon decreases, up to a relative ``tol``."""
        order = np.argsort(self.eps)[::-1]
        v = np.asarray(self.values)[order]
        return bool(np.all(v[1:] <= (1.0 + tol) * v[:-1]))

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "eps": list(self.eps),
            "values": list(self.values),
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "floored": self.floored,
        }


def fit_rate(name: str, eps, values) -> RateFit:
    """Least-squares line through ``(log eps, log value)``; ``residual`` is the RMS log misfit."""
    e = np.asarray(eps, dtype=float)
    y = np.asarray(values, dtype=float)
    if e.shape != y.shape or e.size < 3:
        raise ValueError("a rate fit needs at least 3 (eps, value) pairs")
    floored = bool(np.any(y < RATE_FLOOR))
    y = np.maximum(y, RATE_FLOOR)
    slope, intercept = np.polyfit(np.log(e), np.log(y), 1)
    res = np.log(y) - (slope * np.log(e) + intercept)
    return RateFit(
        name, tuple(e.tolist()), tuple(y.tolist()), float(slope), float(intercept),
        float(np.sqrt(np.mean(res**2))), floored,
    )


def _terminal_quantities(run: PairRun) -> dict[str, float]:
    last = run.records[-1]
    return {
        "p_rel": last.p_rel,
        "elec_diff": last.elec_diff,
        "vel_gap_integral": last.vel_gap_integral,
        "L1_sq": last.L1**2,
        "hminus1_sq": last.hminus1_dual**2,
        "p_rel_sup": run.sup("p_rel"),
        "elec_diff_sup": run.sup("elec_diff"),
    }


def fit_rates(runs: list[PairRun]) -> list[RateFit]:
    done = [r for r in runs if r.completed and r.records]
    if len(done) < 3:
        raise ValueError("rate fits need at least 3 completed runs")
    table = [_terminal_quantities(r) for r in done]
    eps = [r.eps for r in done]
    return [fit_rate(name, eps, [row[name] for row in table]) for name in table[0]]


@dataclass(frozen=True)
class Calibration:
    """Bound combination against a right-hand side with one constant fixed at the largest epsilon.

    ``lhs = sup_t H(t) + (1/2eps) int_0^t int rho|u - u_bar|^2`` and
    ``rhs = H(0) + gibbs_excess + eps^delta |F(f0)| + eps^{delta - d/2 - 1} + eps``.
    """

    eps: tuple[float, ...]
    lhs: tuple[float, ...]
    rhs: tuple[float, ...]
    constant: float

    @property
    def ratios(self) -> tuple[float, ...]:
        return tuple(l / (self.constant * r) for l, r in zip(self.lhs, self.rhs))

    @property
    def held(self) -> bool:
        return all(q <= 1.0 + 1e-12 for q in self.ratios)


def calibrate_bound(runs: list[PairRun]) -> Calibration:
    done = sorted((r for r in runs if r.completed and r.records), key=lambda r: -r.eps)
    if not done:
        raise ValueError("no completed runs to calibrate")
    lhs, rhs = [], []
    for r in done:
        p = r.params
        comb = r.series("H_eps") + r.series("vel_gap_integral") / (2.0 * p.eps)
        lhs.append(float(comb.max()))
        first = r.records[0]
        rhs.append(
            first.H_eps + max(r.gaps.gibbs_excess, 0.0) + p.eps**p.delta * abs(first.F_eps)
            + p.eps ** (p.delta - p.d / 2 - 1) + p.eps
        )
    return Calibration(tuple(r.eps for r in done), tuple(lhs), tuple(rhs), lhs[0] / rhs[0])


@dataclass
class SweepResult:
    plan: ExperimentPlan
    runs: list[PairRun]
    fits: list[RateFit]
    calibration: Calibration | None

    def fit(self, name: str) -> RateFit:
        for f in self.fits:
            if f.name == name:
                return f
        raise KeyError(name)

    @property
    def rates_ok(self) -> bool:
        return bool(self.fits) and all(self.fit(q).meets() for q in PRIMARY_QUANTITIES)

    @property
    def audits_ok(self) -> bool:
        return all(r.passed for r in self.runs)

    @property
    def passed(self) -> bool:
        return self.audits_ok and self.rates_ok


def run_sweep(plan: ExperimentPlan, progress: Callable[[PairRun], None] | None = None) -> SweepResult:
    runs = []
    for eps in plan.eps_values:
        run = run_pair(plan, eps)
        runs.append(run)
        if progress is not None:
            progress(run)
    done = [r for r in runs if r.completed]
    fits = fit_rates(runs) if len(done) >= 3 else []
    calib = calibrate_bound(runs) if done and plan.confined else None
    return SweepResult(plan, runs, fits, calib)


# -- single-solver drivers -------------------------------------------------

LP_TOL = 1e-8
BULK_FRACTION = 1e-6


@dataclass
class SeriesRun:
    """Sampled table of a single-solver run."""

    columns: tuple[str, ...]
    rows: list[tuple] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    error: str | None = None
    state: np.ndarray | None = None
    grid: SpatialGrid | None = None

    @property
    def completed(self) -> bool:
        return self.error is None

    @property
    def passed(self) -> bool:
        return self.completed and not self.failures

    def column(self, name: str) -> np.ndarray:
        j = self.columns.index(name)
        return np.array([r[j] for r in self.rows], dtype=float)


def chemical_potential_variation(rho: np.ndarray, grid: SpatialGrid, params: ScalingParams) -> float:
    """Spread of ``log rho + V + Phi`` over cells above ``BULK_FRACTION * max(rho)``."""
    mu = chemical_potential(rho, grid, params)
    bulk = rho >= BULK_FRACTION * rho.max()
    return float(mu[bulk].max() - mu[bulk].min())


FLUID_COLUMNS = (
    "t", "mass", "free_energy", "chem_var", "L2", "Linf", "weighted_norm", "boundary_mass", "rho_min",
)


def run_fluid(
    plan: ExperimentPlan,
    eps: float,
    on_sample: Callable[[tuple, np.ndarray], None] | None = None,
) -> SeriesRun:
    """Fluid solve alone, auditing mass, positivity and per-step free-energy decay."""
    params = plan.params(eps)
    pol = plan.policy
    sx = pol.spatial()
    rho = plan.recipe.density(sx)
    run = SeriesRun(FLUID_COLUMNS, grid=sx)
    mass0 = quad_x(rho, sx)
    weighted0 = weighted_norm_monitor(rho, sx, 1, 2.0)
    energy = free_energy(rho, sx, params)

    def sample(t: float) -> None:
        w = weighted_norm_monitor(rho, sx, 1, 2.0)
        row = (
            t, quad_x(rho, sx), energy, chemical_potential_variation(rho, sx, params),
            lp_norm_monitor(rho, sx, 2.0), lp_norm_monitor(rho, sx, math.inf), w,
            boundary_mass(rho, sx), float(rho.min()),
        )
        run.rows.append(row)
        if abs(row[1] - mass0) > MASS_TOL:
            run.failures.append(f"t={t:.6g}: fluid mass drift {row[1] - mass0:.3e}")
        if w > WEIGHTED_GROWTH * weighted0:
            run.flags.append(f"t={t:.6g}: weighted norm grew beyond {WEIGHTED_GROWTH:g}x")
        if on_sample is not None:
            on_sample(row, rho)

    sample(0.0)
    t = 0.0
    try:
        for k in range(1, plan.n_samples + 1):
            t_next = plan.T * k / plan.n_samples
            for _, rho in advance_fluid(rho, sx, params, t, t_next, scheme=pol.fluid_scheme):
                e = free_energy(rho, sx, params)
                if e > energy + FLUID_ENERGY_TOL:
                    run.failures.append(f"t<={t_next:.6g}: free energy rose by {e - energy:.3e}")
                energy = e
            t = t_next
            bm = boundary_mass(rho, sx)
            if bm > BOUNDARY_TOL * mass0:
                raise FloatingPointError(f"boundary mass {bm:.3e} exceeds {BOUNDARY_TOL:g} of the total")
            sample(t)
    except (CFLError, FloatingPointError, ValueError) as exc:
        run.error = f"{type(exc).__name__} at t={t:.6g}: {exc}"
    run.state = rho
    return run


RESCALED_COLUMNS = ("t", "t_bar", "mass_n", "mass_mapped", "L1_diff", "L2_n", "L4_n", "Linf_n")


def run_rescaled(
    plan: ExperimentPlan,
    eps: float,
    on_sample: Callable[[tuple, np.ndarray], None] | None = None,
) -> SeriesRun:
    """Solve the self-similar equation, map it back and compare with the direct fluid solve.

    The self-similar box is the image of the fluid box at ``T``, so the cells
    mapped back at the horizon coincide with the fluid cells.  ``L^p`` norms
    of ``n`` are checked for monotonicity after every step.
    """
    params = plan.params(eps)
    if not params.confined:
        raise ValueError("the self-similar change of variables needs V = |x|^2/2")
    pol = plan.policy
    sx = pol.spatial()
    ng = rescaled_grid(sx, plan.T)
    rho = plan.recipe.density(sx)
    n = plan.recipe.density(ng)
    run = SeriesRun(RESCALED_COLUMNS, grid=sx)
    ps = (2.0, 4.0, math.inf)
    norms = [lp_norm_monitor(n, ng, p) for p in ps]

    def sample(t: float, t_bar: float) -> None:
        mapped = map_back(n, ng, t, sx).rho
        row = (
            t, t_bar, quad_x(n, ng), quad_x(mapped, sx), quad_x(np.abs(mapped - rho), sx),
            *(lp_norm_monitor(n, ng, p) for p in ps),
        )
        run.rows.append(row)
        if on_sample is not None:
            on_sample(row, mapped)

    sample(0.0, 0.0)
    t = t_bar = 0.0
    try:
        for k in range(1, plan.n_samples + 1):
            t_next = plan.T * k / plan.n_samples
            for _, rho in advance_fluid(rho, sx, params, t, t_next, scheme=pol.fluid_scheme):
                pass
            tb_next = rescaled_time(t_next)
            for _, n in advance_rescaled(n, ng, params, t_bar, tb_next, scheme=pol.fluid_scheme):
                new = [lp_norm_monitor(n, ng, p) for p in ps]
                for p, a, b in zip(ps, norms, new):
                    if b > a + LP_TOL:
                        run.failures.append(f"t_bar<={tb_next:.6g}: L^{p:g} norm rose by {b - a:.3e}")
                norms = new
            t, t_bar = t_next, tb_next
            sample(t, t_bar)
    except (CFLError, FloatingPointError, ValueError) as exc:
        run.error = f"{type(exc).__name__} at t={t:.6g}: {exc}"
    run.state = map_back(n, ng, t, sx).rho
    return run
