from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from overdamp.fields import FieldState
from overdamp.fluid import fluid_velocity
from overdamp.grid import PhaseGrid, SpatialGrid, VelocityGrid, quad_v, quad_x, quad_xv
from overdamp.kinetic import (
    RHO_FLOOR,
    CFLError,
    KineticState,
    ScalingParams,
    StepInfo,
    advance,
    collision_step,
    error_term_e,
    force_step,
    local_maxwellian,
    maxwellian,
    moments,
    ou_coefficients,
    stable_dt,
    transport_step,
    vpfp_step,
)

from conftest import gaussian


def velocity_moments(f, grid):
    rho = quad_v(f, grid)
    mean = quad_v(f * grid.v, grid) / rho
    var = quad_v(f * (grid.v - mean[:, None]) ** 2, grid) / rho
    return rho, mean, var


# -- scaling parameters ------------------------------------------------------


@pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 1.5])
def test_params_reject_eps_outside_unit_interval(eps):
    with pytest.raises(ValueError, match="epsilon must lie in"):
        ScalingParams(eps)


def test_params_reject_nonpositive_delta():
    with pytest.raises(ValueError):
        ScalingParams(0.5, 0.0)


@pytest.mark.parametrize(
    "delta, confined, d, zeta",
    [(2.0, True, 1, 1.0), (1.2, True, 1, 0.7), (0.6, False, 1, 0.6), (2.0, False, 1, 1.0), (2.0, True, 3, 0.5)],
)
def test_zeta_is_derived(delta, confined, d, zeta):
    assert ScalingParams(0.3, delta, confined, d).zeta == pytest.approx(zeta)


def test_rates_follow_scaling():
    p = ScalingParams(0.5, 2.0)
    assert p.relaxation_rate == pytest.approx(16.0)
    assert p.friction_rate == pytest.approx(2.0)
    assert p.velocity_diffusion == pytest.approx(32.0)
    x = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(ScalingParams(0.5, confined=False).potential_grad(x), 0.0)


def test_kinetic_state_invariants(phase_grid):
    f = np.zeros(phase_grid.shape)
    f[10, 10] = -1e-3
    with pytest.raises(ValueError, match="negative"):
        KineticState(phase_grid, f)
    with pytest.raises(ValueError):
        KineticState(phase_grid, np.zeros((3, 3)))
    f = np.ones(phase_grid.shape)
    with pytest.raises(ValueError, match="mass"):
        KineticState(phase_grid, f).check_unit_mass()


# -- Maxwellian and moments --------------------------------------------------


@pytest.mark.parametrize("u", [0.0, 0.7, -1.3])
def test_maxwellian_moment_identities(u):
    eps = 0.25
    vg = VelocityGrid.for_scaling(eps, 256, 8.0, abs(u))
    m = maxwellian(u, eps, vg.v)[0]
    dv = vg.dv
    assert m.sum() * dv == pytest.approx(1.0, abs=1e-12)
    assert (vg.v * m).sum() * dv == pytest.approx(u, abs=1e-12)
    assert (vg.v**2 * m).sum() * dv == pytest.approx(u**2 + 1 / eps, abs=1e-10)


def test_moments_of_centred_maxwellian(phase_grid):
    rho0 = gaussian(phase_grid.x, 0.3, 1.5)
    f = local_maxwellian(rho0, 0.0, 0.2, phase_grid)
    mom = moments(f, phase_grid)
    np.testing.assert_allclose(mom.rho, rho0, rtol=0, atol=1e-14)
    np.testing.assert_allclose(mom.u, 0.0, atol=1e-12)
    assert abs(mom.momentum) < 1e-12


def test_moments_of_shifted_maxwellian(phase_grid):
    rho0 = gaussian(phase_grid.x, 0.0, 2.0)
    f = local_maxwellian(rho0, 0.3, 0.2, phase_grid, exact_density=False)
    mom = moments(f, phase_grid)
    live = mom.rho > RHO_FLOOR
    np.testing.assert_allclose(mom.u[live], 0.3, atol=1e-6)
    assert mom.momentum == pytest.approx(0.3 * quad_x(mom.rho, phase_grid), rel=1e-6)


def test_moments_regularise_vacuum(phase_grid):
    f = local_maxwellian(np.ones(phase_grid.spatial.n_x), 0.5, 0.2, phase_grid)
    f[7] = 0.0
    mom = moments(f, phase_grid)
    assert mom.u[7] == 0.0
    assert np.all(np.isfinite(mom.u))


# -- transport -----------------------------------------------------------------


def test_transport_leaves_x_independent_data_unchanged(phase_grid):
    f = np.tile(maxwellian(0.0, 0.2, phase_grid.v)[0], (phase_grid.spatial.n_x, 1))
    for scheme in ("upwind", "vanleer", "minmod"):
        out = transport_step(f, phase_grid, 0.5 * phase_grid.dx / phase_grid.v.max(), scheme, periodic=True).f
        np.testing.assert_allclose(out, f, rtol=1e-14, atol=0)


@pytest.mark.parametrize("scheme", ["upwind", "vanleer"])
def test_transport_exact_shift_at_unit_courant(phase_grid, scheme):
    f = np.zeros(phase_grid.shape)
    j = phase_grid.velocity.n_v - 1
    f[20, j] = 1.0
    out = transport_step(f, phase_grid, phase_grid.dx / phase_grid.v[j], scheme).f
    expected = np.zeros_like(f)
    expected[21, j] = 1.0
    np.testing.assert_allclose(out, expected, atol=1e-14)


@pytest.mark.parametrize("scheme", ["upwind", "vanleer"])
def test_transport_conserves_mass_of_interior_data(phase_grid, scheme):
    rho0 = gaussian(phase_grid.x, 0.0, 0.3)
    f = local_maxwellian(rho0, 0.0, 0.2, phase_grid)
    m0 = quad_xv(f, phase_grid)
    dt = 0.002
    for _ in range(100):
        res = transport_step(f, phase_grid, dt, scheme)
        assert res.outflow < 1e-14
        f = res.f
    assert quad_xv(f, phase_grid) == pytest.approx(m0, abs=1e-12)


def test_transport_reports_outflow(phase_grid):
    f = np.zeros(phase_grid.shape)
    j = phase_grid.velocity.n_v - 1
    f[-1, j] = 1.0
    m0 = quad_xv(f, phase_grid)
    res = transport_step(f, phase_grid, 0.5 * phase_grid.dx / phase_grid.v[j])
    assert quad_xv(res.f, phase_grid) + res.outflow == pytest.approx(m0, abs=1e-14)
    assert res.outflow > 0


def test_transport_rejects_cfl_violation(phase_grid):
    f = np.zeros(phase_grid.shape)
    with pytest.raises(CFLError):
        transport_step(f, phase_grid, 1.01 * phase_grid.dx / np.abs(phase_grid.v).max())


# -- force ---------------------------------------------------------------------


def constant_field(grid: SpatialGrid, value: float) -> FieldState:
    return FieldState(grid, np.zeros(grid.n_x), np.full(grid.n_x, value))


def test_force_step_without_force_is_identity(phase_grid):
    p = ScalingParams(0.2, confined=False)
    f = local_maxwellian(gaussian(phase_grid.x), 0.4, 0.2, phase_grid)
    out = force_step(f, phase_grid, constant_field(phase_grid.spatial, 0.0), p, 0.01)
    np.testing.assert_array_equal(out, f)


def test_force_step_exact_shift(phase_grid):
    p = ScalingParams(0.2, confined=False)
    f = np.zeros(phase_grid.shape)
    f[:, 30] = 1.0
    # speed -(grad Phi)/eps = -1, one cell in time dv
    fld = constant_field(phase_grid.spatial, p.eps)
    out = force_step(f, phase_grid, fld, p, phase_grid.dv)
    expected = np.zeros_like(f)
    expected[:, 29] = 1.0
    np.testing.assert_allclose(out, expected, atol=1e-14)


@given(st.integers(0, 2**32 - 1))
def test_force_step_conserves_column_mass(seed):
    rng = np.random.default_rng(seed)
    grid = PhaseGrid(SpatialGrid(-4.0, 4.0, 16), VelocityGrid(6.0, 24))
    p = ScalingParams(0.3)
    f = rng.random(grid.shape)
    fld = FieldState(grid.spatial, np.zeros(16), rng.uniform(-0.5, 0.5, 16))
    dt = 0.9 * stable_dt(grid, p, safety=1.0)
    out = force_step(f, grid, fld, p, dt, scheme="vanleer")
    np.testing.assert_allclose(quad_v(out, grid), quad_v(f, grid), rtol=1e-13)
    assert out.min() >= 0.0


def test_force_step_cfl_error_names_column(phase_grid):
    p = ScalingParams(0.2, confined=False)
    grad = np.zeros(phase_grid.spatial.n_x)
    grad[17] = 5.0
    fld = FieldState(phase_grid.spatial, np.zeros_like(grad), grad)
    with pytest.raises(CFLError, match="column 17"):
        force_step(np.zeros(phase_grid.shape), phase_grid, fld, p, phase_grid.dv)


# -- collision -----------------------------------------------------------------


@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 0.1))
def test_collision_preserves_density_and_positivity(seed, dt):
    rng = np.random.default_rng(seed)
    grid = PhaseGrid(SpatialGrid(-4.0, 4.0, 12), VelocityGrid.for_scaling(0.3, 32))
    f = rng.random(grid.shape) ** 3
    out = collision_step(f, grid, ScalingParams(0.3), dt)
    assert out.min() >= 0.0
    np.testing.assert_allclose(quad_v(out, grid), quad_v(f, grid), rtol=1e-13)


def test_collision_equilibrium_is_fixed_point():
    p = ScalingParams(0.4)
    grid = PhaseGrid(SpatialGrid(-2.0, 2.0, 8), VelocityGrid.for_scaling(0.4, 128, 8.0, 1.0))
    ou = ou_coefficients(p, friction=False)
    u = 0.6
    f = np.tile(gaussian(grid.v, u, ou.variance), (8, 1))
    out = collision_step(f, grid, p, 0.05, friction=False)
    np.testing.assert_allclose(out, f, atol=1e-10 * f.max())


@pytest.mark.parametrize("var0", [0.5, 4.0])
def test_collision_frozen_centre_moment_recursion(var0):
    p = ScalingParams(0.5)
    grid = PhaseGrid(SpatialGrid(-1.0, 1.0, 8), VelocityGrid(16.0, 256))
    ou = ou_coefficients(p)
    u0, dt = 1.0, 0.01
    f = np.tile(gaussian(grid.v, u0, var0), (8, 1))
    out = collision_step(f, grid, p, dt, centre="frozen")
    _, mean, var = velocity_moments(out, grid)
    ustar = ou.center_factor * u0
    decay = np.exp(-ou.rate * dt)
    np.testing.assert_allclose(mean, ustar + (u0 - ustar) * decay, rtol=1e-8)
    np.testing.assert_allclose(var, ou.variance + (var0 - ou.variance) * decay**2, rtol=1e-8)


def test_collision_exact_centre_damps_momentum_at_friction_rate():
    p = ScalingParams(0.3)
    grid = PhaseGrid(SpatialGrid(-1.0, 1.0, 8), VelocityGrid(30.0, 512))
    f = np.tile(gaussian(grid.v, 2.0, 3.0), (8, 1))
    dt = 0.05
    out = collision_step(f, grid, p, dt)
    _, mean, _ = velocity_moments(out, grid)
    np.testing.assert_allclose(mean, 2.0 * np.exp(-dt / p.eps), rtol=1e-8)


def test_collision_without_friction_conserves_momentum(phase_grid):
    p = ScalingParams(0.2)
    rho0 = gaussian(phase_grid.x, 0.0, 1.0)
    u0 = 0.5 * np.tanh(phase_grid.x)
    f = rho0[:, None] * gaussian(phase_grid.v[None, :], u0[:, None], 2.0)
    m0 = moments(f, phase_grid).momentum
    out = collision_step(f, phase_grid, p, 0.01, friction=False)
    assert moments(out, phase_grid).momentum == pytest.approx(m0, abs=1e-10)


def test_narrow_kernel_keeps_mass_and_mean():
    # kernel spread well below one velocity cell
    p = ScalingParams(0.9)
    grid = PhaseGrid(SpatialGrid(-1.0, 1.0, 8), VelocityGrid(12.0, 24))
    ou = ou_coefficients(p)
    dt = 1e-4
    assert ou.variance * -np.expm1(-2 * ou.rate * dt) < grid.dv**2
    f = np.tile(gaussian(grid.v, 0.8, 2.0), (8, 1))
    out = collision_step(f, grid, p, dt)
    rho0, mean0, _ = velocity_moments(f, grid)
    rho, mean, _ = velocity_moments(out, grid)
    np.testing.assert_allclose(rho, rho0, rtol=1e-14)
    np.testing.assert_allclose(mean, mean0 * np.exp(-dt / p.eps), rtol=1e-10)
    assert out.min() >= 0.0


def test_collision_rejects_unknown_centre(phase_grid):
    with pytest.raises(ValueError):
        collision_step(np.ones(phase_grid.shape), phase_grid, ScalingParams(0.2), 0.01, centre="mid")


# -- full step -------------------------------------------------------------------


def well_prepared(eps, n_x=64, n_v=64):
    p = ScalingParams(eps)
    sx = SpatialGrid(-8.0, 8.0, n_x)
    grid = PhaseGrid(sx, VelocityGrid.for_scaling(eps, n_v, 7.0, 1.0))
    rho0 = gaussian(sx.x, 0.5, 1.0)
    rho0 /= quad_x(rho0, sx)
    f0 = local_maxwellian(rho0, fluid_velocity(rho0, sx, p), eps, grid)
    return p, grid, f0


def test_vpfp_small_time_invariants():
    p, grid, f = well_prepared(0.5)
    dt = stable_dt(grid, p)
    info = StepInfo()
    for _ in range(10):
        f = vpfp_step(f, grid, p, dt, info=info)
    assert quad_xv(f, grid) == pytest.approx(1.0, abs=1e-8)
    assert f.min() >= 0.0
    assert info.outflow < 1e-12
    assert info.field is not None


def test_vpfp_mass_over_many_steps():
    p, grid, f = well_prepared(0.4, 32, 32)
    dt = stable_dt(grid, p)
    for _ in range(1000):
        f = vpfp_step(f, grid, p, dt)
    assert quad_xv(f, grid) == pytest.approx(1.0, abs=1e-10)


def test_vpfp_time_step_self_convergence():
    p, grid, f0 = well_prepared(0.3)
    dt0 = stable_dt(grid, p)
    rhos = []
    for k in (1, 2, 4, 8):
        for _, _, f in advance(f0, grid, p, 0.0, 0.2, dt0 / k):
            pass
        rhos.append(moments(f, grid).rho)
    diffs = [quad_x(np.abs(a - b), grid) for a, b in zip(rhos, rhos[1:])]
    orders = np.log2(np.array(diffs[:-1]) / np.array(diffs[1:]))
    assert np.all(orders >= 1.0), orders


def test_advance_lands_on_end_time():
    p, grid, f0 = well_prepared(0.5, 32, 32)
    times = [t for t, _, _ in advance(f0, grid, p, 0.0, 0.1, 0.03)]
    assert times[-1] == 0.1
    assert len(times) == 4


def test_vpfp_propagates_cfl_error():
    p, grid, f0 = well_prepared(0.5, 32, 32)
    with pytest.raises(CFLError):
        vpfp_step(f0, grid, p, 4.0 * grid.dx / np.abs(grid.v).max())


# -- closure error -------------------------------------------------------------


def test_error_term_vanishes_at_local_maxwellian():
    p, grid, f = well_prepared(0.2, 128, 128)
    e = error_term_e(f, grid, p)
    assert np.abs(e).max() < 1e-9


def test_error_term_zero_for_homogeneous_wide_gaussian(phase_grid, params):
    f = np.tile(gaussian(phase_grid.v, 0.0, 2.0 / params.eps), (phase_grid.spatial.n_x, 1))
    np.testing.assert_allclose(error_term_e(f, phase_grid, params), 0.0, atol=1e-12)


def test_error_term_detects_non_maxwellian(phase_grid, params):
    rho = gaussian(phase_grid.x)
    f = rho[:, None] * gaussian(phase_grid.v[None, :], 0.0, 1.0 + phase_grid.x[:, None] ** 2)
    assert np.abs(error_term_e(f, phase_grid, params)).max() > 1e-2
