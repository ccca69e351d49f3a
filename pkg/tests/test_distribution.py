"""
Test bumps, curve deltas and distributional residuals
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from app.errors import DomainError, PreconditionError, UnsupportedKernelError
from app.utils.distribution import (
    BumpDerivative,
    CurveDelta,
    DistributionDensity,
    PiecewiseField,
    TestBump,
    bump_suite,
    delta_shock_triple,
    flux_density,
    observable_flux,
    pair_curve,
    pair_density,
    residual_observable,
    residual_transport,
    suite_summary,
)
from app.utils.kernels import FilterScale, scale_kernel
from app.utils.riemann_exact import RiemannData, classify, filtered_profile


BUMP_PROFILE_INTEGRAL = 0.4439938161680794     # integral of exp(-1/(1 - r^2)) over (-1, 1)
ON_RAY_BUMP = TestBump(1.5, 1.5, 0.8, 0.8)


# ============================================================================
# TEST BUMPS
# ============================================================================

def test_bump_peak_and_support():
    phi = TestBump(0.0, 1.0, 0.5, 0.5)
    assert float(phi.value(0.0, 1.0)) == pytest.approx(math.exp(-2.0))
    assert float(phi.value(0.6, 1.0)) == 0.0
    assert float(phi.dx(0.0, 1.0)) == 0.0


def test_bump_must_stay_in_upper_half_plane():
    with pytest.raises(DomainError):
        TestBump(0.0, 0.5, 1.0, 0.6).require_upper_half()


def test_bump_radii_must_be_positive():
    with pytest.raises(DomainError):
        TestBump(0.0, 1.0, 0.0, 0.5)


def test_bump_suite_is_reproducible_and_centered():
    first = bump_suite(1.0, seed=7, count=6)
    assert first == bump_suite(1.0, seed=7, count=6)
    assert len(first) == 6
    for i, phi in enumerate(first):
        assert phi.t0 - phi.rt > 0.0
        if i % 2 == 0:
            assert phi.x0 == pytest.approx(phi.t0)


# ============================================================================
# PAIRINGS
# ============================================================================

def test_vertical_line_pairing_matches_profile_integral():
    ray = CurveDelta.ray(0.0, lambda s: 1.0, s_hi=5.0)
    phi = TestBump(0.0, 2.0, 0.5, 0.5)
    expected = math.exp(-1.0) * 0.5 * BUMP_PROFILE_INTEGRAL
    assert pair_curve(ray, phi) == pytest.approx(expected, rel=1e-8)
    assert pair_curve(ray, phi, BumpDerivative.DT) == pytest.approx(0.0, abs=1e-10)


def test_curve_missing_the_bump_pairs_to_zero():
    ray = CurveDelta.ray(0.0, lambda s: 1.0, offset=10.0)
    assert pair_curve(ray, TestBump(0.0, 2.0, 0.5, 0.5)) == 0.0


def test_constant_density_pairs_with_time_derivative_to_zero():
    rho = DistributionDensity(lambda x, t: np.ones(np.broadcast(x, t).shape))
    assert pair_density(rho, ON_RAY_BUMP, BumpDerivative.DT) == pytest.approx(0.0, abs=1e-10)


def test_deltas_on_different_curves_do_not_add():
    first = DistributionDensity(lambda x, t: 0.0 * x, CurveDelta.ray(1.0, lambda s: s))
    second = DistributionDensity(lambda x, t: 0.0 * x, CurveDelta.ray(2.0, lambda s: s))
    with pytest.raises(PreconditionError):
        first + second


def test_flux_of_a_delta_needs_an_on_jump_velocity():
    rho = DistributionDensity(lambda x, t: 0.0 * x, CurveDelta.ray(1.0, lambda s: s))
    with pytest.raises(PreconditionError):
        flux_density(rho, PiecewiseField(2.0, 0.0, 1.0))


# ============================================================================
# RESIDUALS
# ============================================================================

def test_exact_delta_shock_is_a_distributional_solution(delta_data):
    rho, u = delta_shock_triple(delta_data)
    for i, phi in enumerate((ON_RAY_BUMP, TestBump(0.6, 1.4, 0.5, 0.4))):
        residual = residual_transport(rho, u, phi, bump_id=i)
        assert abs(residual.total) <= 1e-8
        assert residual.to_row()[0] == i


def test_displaced_shock_is_detected(delta_data):
    rho, u = delta_shock_triple(delta_data, sigma_shift=0.1)
    residual = residual_transport(rho, u, ON_RAY_BUMP)
    assert abs(residual.total) > 1e-4


def test_observable_residual_cancels(delta_data, helmholtz):
    residual = residual_observable(delta_data, helmholtz, FilterScale(0.1), ON_RAY_BUMP)
    assert residual.largest_term > 0.0
    assert abs(residual.total) <= 1e-6 * residual.largest_term


def test_observable_residual_is_helmholtz_only(delta_data, gaussian):
    with pytest.raises(UnsupportedKernelError):
        residual_observable(delta_data, gaussian, FilterScale(0.1), ON_RAY_BUMP)


def test_observable_residual_depends_on_the_kernel_not_its_name(delta_data, helmholtz, gaussian):
    a = FilterScale(0.1)
    renamed = residual_observable(delta_data, replace(helmholtz, name='exp-green'), a, ON_RAY_BUMP)
    assert renamed == residual_observable(delta_data, helmholtz, a, ON_RAY_BUMP)
    with pytest.raises(UnsupportedKernelError):
        residual_observable(delta_data, replace(gaussian, name='helmholtz'), a, ON_RAY_BUMP)


def test_observable_residual_accepts_a_rescaled_helmholtz_kernel(delta_data, helmholtz):
    residual = residual_observable(delta_data, scale_kernel(helmholtz, FilterScale(0.5)), FilterScale(0.2), ON_RAY_BUMP)
    assert abs(residual.total) <= 1e-6 * residual.largest_term


@pytest.mark.slow
@pytest.mark.parametrize('data', [RiemannData(1.0, 2.0, 1.0, 0.0), RiemannData(2.0, 3.0, 1.0, -1.0), RiemannData(1.0, 1.0, 2.0, -1.0)],
                         ids=['reference', 'fast-left', 'standing'])
@pytest.mark.parametrize('alpha', [0.05, 0.1, 0.5])
def test_observable_residual_cancels_over_the_bump_suite(helmholtz, data, alpha):
    for i, phi in enumerate(bump_suite(classify(data).sigma, seed=20100, count=10)):
        residual = residual_observable(data, helmholtz, FilterScale(alpha), phi, bump_id=i)
        assert residual.largest_term > 0.0
        assert abs(residual.total) <= 1e-6 * residual.largest_term, i


def test_observable_flux_reduces_to_side_fluxes(helmholtz):
    d = RiemannData(1.0, 2.0, 3.0, 0.0)
    profile = filtered_profile(d, helmholtz, FilterScale(0.2))
    assert float(observable_flux(profile, 0.5, 1.0)) == pytest.approx(2.0, abs=1e-12)
    assert float(observable_flux(profile, 0.9, 1.0)) == pytest.approx(2.0, abs=1e-12)
    assert float(observable_flux(profile, 1.3, 1.0)) == pytest.approx(0.0, abs=1e-12)


def test_suite_summary_reports_largest_total(delta_data):
    rows = [residual_transport(*delta_shock_triple(delta_data), ON_RAY_BUMP, bump_id=0)]
    summary = suite_summary(rows)
    assert summary['bumps'] == 1
    assert summary['max_residual'] == abs(rows[0].total)
    assert suite_summary([]) == {'bumps': 0, 'max_residual': 0.0}
