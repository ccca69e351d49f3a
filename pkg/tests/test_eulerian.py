"""
Eulerian grid solver and its diagnostics
"""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.errors import DomainError, PreconditionError
from app.utils.eulerian import (
    GridState,
    RunConfig,
    SweepRow,
    SweepTable,
    alpha_sweep,
    filter_field,
    fitted_rates,
    front_position,
    linear_slope,
    mass_in_window,
    observable_balance,
    observable_divergence,
    riemann_state,
    run,
    smooth_state,
    step,
)
from app.utils.kernels import (
    Boundary,
    FilterScale,
    SampledField,
    convolve,
    gaussian_kernel,
    helmholtz_filter,
    helmholtz_kernel,
    scale_kernel,
)
from app.utils.riemann_exact import RiemannData


TWO_PI = 2.0 * math.pi


def periodic_state(n, rho_fn, u_fn, alpha, kernel=None):
    return smooth_state(0.0, TWO_PI, n, rho_fn, u_fn, kernel or helmholtz_kernel(), FilterScale(alpha), Boundary.PERIODIC)


# ============================================================================
# STATES & CONFIG
# ============================================================================

def test_negative_density_is_rejected(helmholtz):
    grid = np.linspace(0.0, 1.0, 11)
    with pytest.raises(PreconditionError):
        GridState(grid, np.full(11, -1.0), np.zeros(11), FilterScale(0.5), helmholtz)


def test_run_config_validates_cfl():
    with pytest.raises(PreconditionError):
        RunConfig(cfl=1.5)
    with pytest.raises(PreconditionError):
        RunConfig(alphas=(0.1,), grid_sizes=())


def test_riemann_state_puts_the_jump_on_a_face(delta_data, helmholtz):
    state = riemann_state(delta_data, helmholtz, FilterScale(0.05), -1.0, 3.0, 800)
    assert state.dx == pytest.approx(0.005)
    assert state.grid[0] == pytest.approx(-1.0 + 0.0025)
    assert np.all(state.u[state.grid < 0.0] == 2.0)
    assert np.all(state.u[state.grid > 0.0] == 0.0)


def test_periodic_grid_excludes_endpoint():
    state = periodic_state(64, lambda x: np.ones_like(x), np.sin, 0.5)
    assert state.grid[-1] < TWO_PI
    assert state.total_mass() == pytest.approx(TWO_PI)


# ============================================================================
# OPERATORS
# ============================================================================

@pytest.mark.parametrize('kernel', [helmholtz_kernel(), gaussian_kernel()], ids=['helmholtz', 'gaussian'])
def test_periodic_observable_divergence_integrates_to_zero(kernel):
    grid = np.linspace(0.0, TWO_PI, 128, endpoint=False)
    f = SampledField(grid, 1.0 + 0.5 * np.cos(grid), Boundary.PERIODIC)
    v = SampledField(grid, np.sin(2.0 * grid) + 0.3 * np.cos(grid), Boundary.PERIODIC)
    odiv = observable_divergence(f, v, kernel, FilterScale(0.3))
    assert np.sum(odiv) * f.dx == pytest.approx(0.0, abs=1e-12)


def test_helmholtz_dispatch_follows_the_kernel_not_its_name(helmholtz, gaussian):
    grid = np.linspace(0.0, TWO_PI, 128, endpoint=False)
    f = SampledField(grid, np.sin(grid) + 0.2 * np.cos(3.0 * grid), Boundary.PERIODIC)
    a = FilterScale(0.2)
    banded = helmholtz_filter(f, a).values

    np.testing.assert_array_equal(filter_field(f, replace(helmholtz, name='exp-green'), a), banded)
    np.testing.assert_allclose(filter_field(f, scale_kernel(helmholtz, FilterScale(0.5)), FilterScale(0.4)), banded,
                               atol=1e-14)
    np.testing.assert_array_equal(filter_field(f, replace(gaussian, name='helmholtz'), a), convolve(f, gaussian, a).values)


def test_observable_divergence_needs_one_grid(helmholtz):
    f = SampledField(np.linspace(0.0, 1.0, 11), np.ones(11))
    v = SampledField(np.linspace(0.0, 2.0, 11), np.ones(11))
    with pytest.raises(PreconditionError):
        observable_divergence(f, v, helmholtz, FilterScale(0.5))


def test_observable_balance_of_a_periodic_state(helmholtz):
    state = periodic_state(256, lambda x: 1.0 + 0.3 * np.cos(x), lambda x: 1.0 + 0.5 * np.sin(2.0 * x), 0.2)
    assert observable_balance(state) <= 1e-12
    with pytest.raises(PreconditionError):
        observable_balance(riemann_state(RiemannData(1.0, 0.5, 1.0, 0.5), helmholtz, FilterScale(0.05), -1.0, 1.0, 200))


def test_constant_state_is_a_fixed_point(helmholtz):
    state = riemann_state(RiemannData(1.0, 0.5, 1.0, 0.5), helmholtz, FilterScale(0.05), -1.0, 1.0, 200)
    advanced = step(state, 0.9)
    np.testing.assert_array_equal(advanced.rho, state.rho)
    np.testing.assert_array_equal(advanced.u, state.u)
    assert advanced.time == pytest.approx(0.9 * state.dx / 0.5)
    assert advanced.steps == 1


def test_step_respects_the_cap(delta_data, helmholtz):
    state = riemann_state(delta_data, helmholtz, FilterScale(0.05), -1.0, 3.0, 800)
    assert step(state, 0.9, dt_max=1e-5).time == pytest.approx(1e-5)


# ============================================================================
# TIME LOOP
# ============================================================================

def test_zero_end_time_echoes_the_initial_state(delta_data, helmholtz):
    state = riemann_state(delta_data, helmholtz, FilterScale(0.05), -1.0, 3.0, 800)
    result = run(state, RunConfig(t_end=0.0))
    assert len(result.snapshots) == 1
    assert result.final is state
    assert result.diagnostics[0].t == 0.0


def test_snapshots_land_on_output_times(delta_data, helmholtz):
    state = riemann_state(delta_data, helmholtz, FilterScale(0.05), -1.0, 3.0, 400)
    result = run(state, RunConfig(t_end=0.3, output_every=0.1))
    np.testing.assert_allclose(result.series('t'), [0.0, 0.1, 0.2, 0.3], atol=1e-12)
    assert 0.0 < result.dt_min <= 0.1


def test_constant_advection_is_first_order():
    """L1 error of a transported density roughly halves when the grid is refined"""
    errors = []
    for n in (200, 400):
        state = smooth_state(0.0, 1.0, n, lambda x: 1.0 + 0.5 * np.sin(TWO_PI * x), lambda x: np.ones_like(x),
                             helmholtz_kernel(), FilterScale(0.05), Boundary.PERIODIC)
        final = run(state, RunConfig(cfl=0.5, t_end=0.5)).final
        exact = 1.0 + 0.5 * np.sin(TWO_PI * (final.grid - 0.5))
        errors.append(float(np.sum(np.abs(final.rho - exact)) * final.dx))
    assert 1.5 <= errors[0] / errors[1] <= 2.5


def test_periodic_run_conserves_mass():
    state = periodic_state(256, lambda x: 1.0 + 0.3 * np.cos(x), lambda x: 1.0 + 0.5 * np.sin(x), 0.2)
    result = run(state, RunConfig(cfl=0.5, t_end=0.5))
    masses = result.series('total_mass')
    assert abs(masses[-1] - masses[0]) <= 1e-10 * masses[0]
    assert result.audit_passed
    assert result.final.clipped_mass == 0.0


def test_velocity_obeys_the_maximum_principle(delta_data, helmholtz):
    state = riemann_state(delta_data, helmholtz, FilterScale(0.05), -1.0, 3.0, 800)
    final = run(state, RunConfig(t_end=0.5)).final
    assert final.u.min() >= 0.0 - 1e-12
    assert final.u.max() <= 2.0 + 1e-12


def test_riemann_total_mass_grows_at_the_inflow_rate(delta_data, helmholtz):
    state = riemann_state(delta_data, helmholtz, FilterScale(0.05), -1.0, 3.0, 800)
    result = run(state, RunConfig(t_end=1.0))
    slope = linear_slope(result.series('t'), result.series('total_mass'))
    assert slope == pytest.approx(2.0, rel=0.01)
    assert result.audit_passed


def test_delta_front_moves_at_the_shock_speed(delta_data, helmholtz):
    """The u = 1 crossing follows x = t with only 20 cells per alpha"""
    state = riemann_state(delta_data, helmholtz, FilterScale(0.1), -1.0, 3.0, 800)
    cfg = RunConfig(t_end=1.0, front_level=1.0, fit_window=(0.4, 1.0))
    rates = fitted_rates(run(state, cfg), cfg)
    assert rates['front_speed'] == pytest.approx(1.0, rel=0.01)


def test_front_speed_does_not_depend_on_cells_per_alpha(delta_data, helmholtz):
    cfg = RunConfig(t_end=1.0, front_level=1.0, fit_window=(0.4, 1.0))
    speeds = []
    for alpha in (0.1, 0.05):
        state = riemann_state(delta_data, helmholtz, FilterScale(alpha), -1.0, 3.0, 800)
        speeds.append(fitted_rates(run(state, cfg), cfg)['front_speed'])
    assert abs(speeds[0] - speeds[1]) < 0.01


@pytest.mark.slow
@pytest.mark.parametrize('alpha, n', [(0.02, 4000), (0.01, 8000)])
def test_delta_front_and_mass_slope(delta_data, helmholtz, alpha, n):
    state = riemann_state(delta_data, helmholtz, FilterScale(alpha), -1.0, 3.0, n)
    cfg = RunConfig(t_end=1.5, window_speed=1.0, front_level=1.0, fit_window=(0.5, 1.5))
    rates = fitted_rates(run(state, cfg), cfg)
    assert rates['front_speed'] == pytest.approx(1.0, rel=0.02)
    assert rates['mass_slope'] == pytest.approx(2.0, rel=0.05)


# ============================================================================
# DIAGNOSTICS
# ============================================================================

def test_unit_density_window_mass(helmholtz):
    grid = np.linspace(-1.0, 1.0, 41)
    state = GridState(grid, np.ones(41), np.zeros(41), FilterScale(0.5), helmholtz)
    assert mass_in_window(state, 0.013, 0.5) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(DomainError):
        mass_in_window(state, 0.9, 0.5)


def test_front_position_interpolates(helmholtz):
    grid = np.linspace(0.0, 1.0, 11)
    state = GridState(grid, np.ones(11), 1.0 - 2.0 * grid ** 2, FilterScale(0.5), helmholtz)
    assert front_position(state, 0.0) == pytest.approx(0.7 + 0.1 * 0.02 / 0.3)
    assert math.isnan(front_position(state, 5.0))


@settings(max_examples=50, deadline=None)
@given(slope=st.floats(min_value=-10.0, max_value=10.0), offset=st.floats(min_value=-10.0, max_value=10.0))
def test_linear_slope_recovers_lines(slope, offset):
    ts = np.linspace(0.5, 1.5, 11)
    assert linear_slope(ts, slope * ts + offset) == pytest.approx(slope, abs=1e-9)


def test_slope_needs_two_points():
    with pytest.raises(PreconditionError):
        linear_slope([1.0], [2.0])


# ============================================================================
# ALPHA SWEEP
# ============================================================================

def test_sweep_needs_decreasing_alphas(delta_data, helmholtz):
    with pytest.raises(PreconditionError):
        alpha_sweep(RunConfig(alphas=(0.05, 0.1), grid_sizes=(400, 800)), delta_data, helmholtz)
    with pytest.raises(PreconditionError):
        alpha_sweep(RunConfig(), delta_data, helmholtz)


def test_sweep_table_improvement_tolerates_noise():
    rows = [SweepRow(0.1, 800, 0.2, 0.05, 1.0), SweepRow(0.05, 1600, 0.1, 0.052, 1.001)]
    table = SweepTable(rows)
    assert table.velocity_improves
    assert table.slope_improves
    assert table.front_speed_spread() == pytest.approx(0.001)
    assert not SweepTable([SweepRow(0.1, 800, 0.1, 0.1), SweepRow(0.05, 1600, 0.2, 0.1)]).velocity_improves


def test_short_sweep_produces_one_row_per_alpha(delta_data, helmholtz):
    cfg = RunConfig(t_end=0.6, fit_window=(0.2, 0.6), alphas=(0.2, 0.1), grid_sizes=(200, 400))
    table = alpha_sweep(cfg, delta_data, helmholtz)
    assert [(r.alpha, r.n) for r in table.rows] == [(0.2, 200), (0.1, 400)]
    for row in table.rows:
        assert math.isfinite(row.vel_err) and math.isfinite(row.slope_err)
        assert row.front_speed == pytest.approx(1.0, rel=0.1)


@pytest.mark.slow
def test_front_speed_spread_at_matched_resolution(delta_data, helmholtz):
    cfg = RunConfig(t_end=1.5, fit_window=(0.5, 1.5), alphas=(0.1, 0.05, 0.02), grid_sizes=(4000, 4000, 4000))
    table = alpha_sweep(cfg, delta_data, helmholtz)
    assert table.front_speed_spread() < 0.01
    assert table.rows[-1].slope_err <= 0.05
