"""
Broad solutions by Picard iteration
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.errors import ConvergenceError, DomainError, PreconditionError
from app.utils.broad_solver import (
    CONTRACTION_CONSTANT,
    SolvedVelocity,
    apply_T,
    SpaceTimeField,
    build_domain,
    lipschitz_check,
    solve_broad,
    weighted_norm,
)
from app.utils.kernels import FilterScale


def rho0(x):
    return 1.0 + np.exp(-np.asarray(x, dtype=float) ** 2)


def constant_velocity(c: float) -> SolvedVelocity:
    return SolvedVelocity.analytic(
        u=lambda x, t: np.full_like(np.asarray(x, dtype=float), c),
        u_x=lambda x, t: np.zeros_like(np.asarray(x, dtype=float)),
        ubar=lambda x, t: np.full_like(np.asarray(x, dtype=float), c),
        max_speed=abs(c),
    )


def compressive_velocity(kappa: float) -> SolvedVelocity:
    """u = -kappa x; filtering leaves a linear field unchanged"""
    return SolvedVelocity.analytic(
        u=lambda x, t: -kappa * np.asarray(x, dtype=float),
        u_x=lambda x, t: np.full_like(np.asarray(x, dtype=float), -kappa),
        ubar=lambda x, t: -kappa * np.asarray(x, dtype=float),
        max_speed=4.0 * kappa,
    )


# ============================================================================
# DOMAIN & NORM
# ============================================================================

def test_domain_is_inset_by_the_speed_bound():
    D = build_domain(constant_velocity(0.5), (-4.0, 4.0), 1.0)
    assert (D.x_lo, D.x_hi) == pytest.approx((-3.5, 3.5))
    assert D.certificate.all_inside
    assert D.mask[0].all()
    assert not D.mask[-1][0]


def test_domain_too_small_raises():
    with pytest.raises(DomainError):
        build_domain(constant_velocity(5.0), (-1.0, 1.0), 1.0)


def test_domain_needs_positive_time():
    with pytest.raises(PreconditionError):
        build_domain(constant_velocity(0.5), (-4.0, 4.0), 0.0)


def test_weighted_norm_discounts_late_times():
    x = np.linspace(0.0, 1.0, 5)
    t = np.array([0.0, 1.0])
    values = np.array([np.zeros(5), np.full(5, 2.0)])
    v = SpaceTimeField(x, t, values, np.ones_like(values, dtype=bool))
    assert weighted_norm(v, 0.5) == pytest.approx(2.0 * math.exp(-1.0))
    assert weighted_norm(v, 0.0) == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(min_value=0, max_value=2 ** 16),
    L=st.floats(min_value=0.0, max_value=3.0),
    scale=st.floats(min_value=-5.0, max_value=5.0),
)
def test_weighted_norm_is_absolutely_homogeneous(seed, L, scale):
    rng = np.random.default_rng(seed)
    x = np.linspace(-1.0, 1.0, 9)
    t = np.linspace(0.0, 1.0, 4)
    values = rng.normal(size=(4, 9))
    mask = rng.random((4, 9)) < 0.7
    mask[0, 0] = True
    v = SpaceTimeField(x, t, values, mask)
    assert weighted_norm(v.with_values(scale * values), L) == pytest.approx(abs(scale) * weighted_norm(v, L), rel=1e-12, abs=1e-300)
    assert weighted_norm(v, L) >= 0.0


def test_space_time_field_shape_is_checked():
    with pytest.raises(PreconditionError):
        SpaceTimeField(np.zeros(3), np.zeros(2), np.zeros((3, 2)), np.ones((3, 2), dtype=bool))


# ============================================================================
# PICARD ITERATION
# ============================================================================

def test_constant_velocity_converges_in_two_iterations(helmholtz):
    u_solved = constant_velocity(0.5)
    D = build_domain(u_solved, (-4.0, 4.0), 1.0)
    solution = solve_broad(rho0, u_solved, helmholtz, FilterScale(0.5), D)

    assert solution.iterations == 2
    assert solution.residuals[0] > 0.0
    assert solution.residuals[1] == 0.0
    assert solution.L == 0.0
    rows = solution.history_rows()
    assert rows[0][0] == 1 and math.isnan(rows[0][2])
    assert rows[1][:2] == [2, 0.0]

    shifted = rho0(D.x[None, :] - 0.5 * D.t[:, None])
    np.testing.assert_allclose(solution.rho.values[D.mask], shifted[D.mask], atol=1e-12)


def test_iteration_cap_raises(helmholtz):
    u_solved = constant_velocity(0.5)
    D = build_domain(u_solved, (-4.0, 4.0), 1.0)
    with pytest.raises(ConvergenceError):
        solve_broad(rho0, u_solved, helmholtz, FilterScale(0.5), D, max_iter=1)


def test_tolerance_must_be_positive(helmholtz):
    u_solved = constant_velocity(0.5)
    D = build_domain(u_solved, (-4.0, 4.0), 1.0)
    with pytest.raises(PreconditionError):
        solve_broad(rho0, u_solved, helmholtz, FilterScale(0.5), D, tol=0.0)


def test_compressive_velocity_contracts(helmholtz):
    u_solved = compressive_velocity(0.2)
    D = build_domain(u_solved, (-4.0, 4.0), 0.5)
    a = FilterScale(0.5)
    solution = solve_broad(rho0, u_solved, helmholtz, a, D)

    assert D.certificate.all_inside
    assert solution.converged
    assert solution.final_residual < 1e-10
    assert solution.max_ratio <= CONTRACTION_CONSTANT + 0.05
    assert solution.contraction_held and solution.ratio_breaches == []
    assert solution.iterates_kept == 2
    assert weighted_norm(solution.iterates[1] - solution.iterates[0], solution.L) == pytest.approx(solution.final_residual)
    assert solution.L == pytest.approx(1.05 * 0.2)
    # Compression raises the density where characteristics converge
    assert solution.rho.values[-1][D.mask[-1]].max() > rho0(0.0)

    start = D.field(np.tile(rho0(D.x), (D.t.size, 1)))
    report = lipschitz_check(solution.rho, start, u_solved, helmholtz, a, solution.L)
    assert report.passed


def test_ratios_above_the_limit_are_reported(helmholtz):
    u_solved = compressive_velocity(0.2)
    D = build_domain(u_solved, (-4.0, 4.0), 0.5)
    solution = solve_broad(rho0, u_solved, helmholtz, FilterScale(0.5), D, ratio_slack=-CONTRACTION_CONSTANT)

    assert solution.converged
    assert not solution.contraction_held
    expected = [m + 2 for m, ratio in enumerate(solution.contraction_ratios) if ratio > 0.0]
    assert expected
    assert solution.ratio_breaches == expected


def test_lipschitz_check_of_identical_fields_is_trivial(helmholtz):
    u_solved = compressive_velocity(0.2)
    D = build_domain(u_solved, (-4.0, 4.0), 0.5)
    field_ = D.field(np.tile(rho0(D.x), (D.t.size, 1)))
    report = lipschitz_check(field_, field_, u_solved, helmholtz, FilterScale(0.5), 0.21)
    assert report.max_ratio == 0.0
    assert report.passed


def test_transport_map_ignores_the_iterate_for_rigid_motion(helmholtz):
    u_solved = constant_velocity(0.5)
    D = build_domain(u_solved, (-4.0, 4.0), 1.0)
    zero = D.field(np.zeros((D.t.size, D.x.size)))
    image = apply_T(zero, rho0, u_solved, helmholtz, FilterScale(0.5), D)
    shifted = rho0(D.x[None, :] - 0.5 * D.t[:, None])
    np.testing.assert_allclose(image.values[D.mask], shifted[D.mask], atol=1e-12)
