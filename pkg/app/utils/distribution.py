"""
Observable Transport Lab Distributions
Weighted deltas on curves, pairings against test bumps, and distribution-solution residuals
"""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, List, Optional, Sequence, Union

import numpy as np
from scipy import integrate

from app.errors import CaseError, DomainError, PrecisionError, PreconditionError, UnsupportedKernelError
from app.utils.kernels import FilterScale, Kernel
from app.utils.quadrature import adaptive_integrate, rectangle_rule
from app.utils.riemann_exact import FilteredProfile, RiemannData, classify, filtered_profile


logger = logging.getLogger(__name__)

FieldFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ============================================================================
# ENUMS & CONSTANTS
# ============================================================================

class BumpDerivative(Enum):
    """Which function of a test bump is paired"""
    VALUE = "phi"
    DT = "phi_t"
    DX = "phi_x"


CURVE_TOLERANCE = 1e-10                 # Absolute tolerance of line integrals
CURVE_SAMPLES = 4097                    # Samples used to locate the curve inside a bump
QUADRATURE_TOLERANCE = 1e-8             # Absolute tolerance per area pairing

# Bump suite layout
SUITE_T_CENTER = (1.2, 2.5)
SUITE_RADIUS = (0.2, 1.0)
SUITE_OFFSET = (0.2, 1.5)               # Distance of off-ray centers from the shock


# ============================================================================
# DATA CLASSES
# ============================================================================

@dataclass(frozen=True)
class TestBump:
    """
    Tensor bump b((x - x0)/rx) b((t - t0)/rt) with b(r) = exp(-1/(1 - r^2)) on |r| < 1
    """
    __test__ = False                    # Not a pytest class

    x0: float
    t0: float
    rx: float
    rt: float

    def __post_init__(self):
        for name in ('x0', 't0', 'rx', 'rt'):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f'bump {name} must be finite')
        if self.rx <= 0.0 or self.rt <= 0.0:
            raise DomainError(
                f'bump radii must be positive, got rx={self.rx}, rt={self.rt}',
                {'rx': self.rx, 'rt': self.rt},
            )

    @property
    def x_range(self):
        return (self.x0 - self.rx, self.x0 + self.rx)

    @property
    def t_range(self):
        return (self.t0 - self.rt, self.t0 + self.rt)

    def require_upper_half(self) -> None:
        """Test functions live in t > 0"""
        if self.t0 - self.rt <= 0.0:
            raise DomainError(
                f'bump support [{self.t0 - self.rt:g}, {self.t0 + self.rt:g}] in t crosses t = 0',
                {'t0': self.t0, 'rt': self.rt},
            )

    def contains(self, x, t) -> np.ndarray:
        return (np.abs(np.asarray(x) - self.x0) < self.rx) & (np.abs(np.asarray(t) - self.t0) < self.rt)

    def value(self, x, t) -> np.ndarray:
        p, q = self._local(x, t)
        return _profile(p) * _profile(q)

    def dt(self, x, t) -> np.ndarray:
        p, q = self._local(x, t)
        return _profile(p) * _profile_slope(q) / self.rt

    def dx(self, x, t) -> np.ndarray:
        p, q = self._local(x, t)
        return _profile_slope(p) * _profile(q) / self.rx

    def function(self, derivative: BumpDerivative) -> FieldFn:
        return {
            BumpDerivative.VALUE: self.value,
            BumpDerivative.DT: self.dt,
            BumpDerivative.DX: self.dx,
        }[derivative]

    def _local(self, x, t):
        return (np.asarray(x, dtype=float) - self.x0) / self.rx, (np.asarray(t, dtype=float) - self.t0) / self.rt


@dataclass(frozen=True)
class CurveDelta:
    """Weighted delta w(s) on the curve s -> (x(s), t(s)), s in [s_lo, s_hi]"""
    x_of: Callable[[float], float]
    t_of: Callable[[float], float]
    dx_ds: Callable[[float], float]
    dt_ds: Callable[[float], float]
    weight: Callable[[float], float]
    s_lo: float
    s_hi: float

    def __post_init__(self):
        if not (math.isfinite(self.s_lo) and math.isfinite(self.s_hi) and self.s_lo < self.s_hi):
            raise PreconditionError(f'curve parameter interval [{self.s_lo}, {self.s_hi}] is invalid')

    @classmethod
    def ray(
        cls,
        speed: float,
        weight: Callable[[float], float],
        s_hi: float = 100.0,
        offset: float = 0.0,
    ) -> 'CurveDelta':
        """Straight ray t = s, x = speed*s + offset for s in [0, s_hi]"""
        return cls(
            x_of=lambda s: speed * s + offset,
            t_of=lambda s: s,
            dx_ds=lambda s: speed,
            dt_ds=lambda s: 1.0,
            weight=weight,
            s_lo=0.0,
            s_hi=s_hi,
        )

    def speed(self, s: float) -> float:
        """Arclength factor sqrt(x'^2 + t'^2)"""
        return math.hypot(self.dx_ds(s), self.dt_ds(s))

    def reweighted(self, factor: Union[float, Callable[[float], float]]) -> 'CurveDelta':
        """Same curve, weight multiplied by a constant or a function of s"""
        base = self.weight
        if callable(factor):
            return replace(self, weight=lambda s: base(s) * factor(s))
        return replace(self, weight=lambda s: base(s) * factor)


@dataclass(frozen=True)
class PiecewiseField:
    """
    Field with at most one jump across x = jump_speed*t + jump_offset

    Sides are constants or vectorized functions of (x, t); on_jump is the
    value assigned on the locus itself.
    """
    left: Union[float, FieldFn]
    right: Union[float, FieldFn]
    jump_speed: float = 0.0
    jump_offset: float = 0.0
    on_jump: Optional[float] = None

    @classmethod
    def constant(cls, value: float) -> 'PiecewiseField':
        return cls(value, value)

    def locus(self, t):
        return self.jump_speed * np.asarray(t, dtype=float) + self.jump_offset

    def __call__(self, x, t) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        edge = self.locus(t)
        left = _side_value(self.left, x, t)
        right = _side_value(self.right, x, t)
        on = 0.5 * (left + right) if self.on_jump is None else self.on_jump
        return np.where(x < edge, left, np.where(x > edge, right, on))


@dataclass(frozen=True)
class DistributionDensity:
    """Locally integrable part h plus an optional weighted delta on a curve"""
    smooth: FieldFn
    delta: Optional[CurveDelta] = None
    jump_speed: Optional[float] = None  # Locus where h may jump; None when h is smooth
    jump_offset: float = 0.0

    @classmethod
    def from_field(cls, field_: PiecewiseField, delta: Optional[CurveDelta] = None) -> 'DistributionDensity':
        return cls(field_, delta, field_.jump_speed, field_.jump_offset)

    def scaled(self, factor: float) -> 'DistributionDensity':
        smooth = self.smooth
        delta = None if self.delta is None else self.delta.reweighted(factor)
        return replace(self, smooth=lambda x, t: factor * smooth(x, t), delta=delta)

    def __add__(self, other: 'DistributionDensity') -> 'DistributionDensity':
        if self.delta is not None and other.delta is not None and (
                self.delta.x_of is not other.delta.x_of or self.delta.t_of is not other.delta.t_of):
            raise PreconditionError('sums of two deltas on different curves are not supported')
        if None not in (self.jump_speed, other.jump_speed) and (
                self.jump_speed, self.jump_offset) != (other.jump_speed, other.jump_offset):
            raise PreconditionError('sums of densities with different jump loci are not supported')

        f, g = self.smooth, other.smooth
        if self.delta is not None and other.delta is not None:
            w1, w2 = self.delta.weight, other.delta.weight
            delta = replace(self.delta, weight=lambda s: w1(s) + w2(s))
        else:
            delta = self.delta or other.delta
        speed, offset = (self.jump_speed, self.jump_offset) if self.jump_speed is not None \
            else (other.jump_speed, other.jump_offset)
        return DistributionDensity(lambda x, t: f(x, t) + g(x, t), delta, speed, offset)


@dataclass(frozen=True)
class ObservableResidual:
    """Grouped pairings of the observable continuity equation against one bump"""
    bump_id: int
    term_i: float                       # <rho, phi_t> + <rho ubar, phi_x>
    term_ii: float                      # <rhobar (u - ubar), phi_x>
    term_iii: float                     # <alpha^2 rhobar_x ubar_x, phi_x>
    quadrature_error: float

    @property
    def total(self) -> float:
        return self.term_i + self.term_ii + self.term_iii

    @property
    def largest_term(self) -> float:
        return max(abs(self.term_i), abs(self.term_ii), abs(self.term_iii))

    def to_row(self) -> List[float]:
        return [self.bump_id, self.term_i, self.term_ii, self.term_iii, self.total]


@dataclass(frozen=True)
class TransportResidual:
    """Definition-level residual <rho, phi_t> + <rho u, phi_x> against one bump"""
    bump_id: int
    density_term: float
    flux_term: float

    @property
    def total(self) -> float:
        return self.density_term + self.flux_term

    def to_row(self) -> List[float]:
        return [self.bump_id, self.density_term, self.flux_term, 0.0, self.total]


# ============================================================================
# PAIRINGS
# ============================================================================

def pair_curve(cd: CurveDelta, psi: TestBump, derivative: BumpDerivative = BumpDerivative.VALUE) -> float:
    """
    Pair a weighted curve delta with a test bump (or one of its derivatives)

    Args:
        cd: Curve delta
        psi: Test bump
        derivative: Function of the bump to pair against

    Returns:
        float: Line integral of w * psi * arclength factor
    """
    test = psi.function(derivative)

    # Locate the part of the parameter interval inside the bump support
    s = np.linspace(cd.s_lo, cd.s_hi, CURVE_SAMPLES)
    xs = np.array([cd.x_of(v) for v in s])
    ts = np.array([cd.t_of(v) for v in s])
    inside = np.flatnonzero(psi.contains(xs, ts))
    if inside.size == 0:
        return 0.0
    a = s[max(inside[0] - 1, 0)]
    b = s[min(inside[-1] + 1, s.size - 1)]

    def integrand(v: float) -> float:
        return float(cd.weight(v) * test(cd.x_of(v), cd.t_of(v)) * cd.speed(v))

    value, error = integrate.quad(integrand, a, b, epsabs=CURVE_TOLERANCE, epsrel=0.0, limit=200)
    if not error <= CURVE_TOLERANCE:
        raise PrecisionError(f'Line integral reached only {error:.2e}', achieved=error, requested=CURVE_TOLERANCE)
    return value


def pair_density(
    rho: DistributionDensity,
    psi: TestBump,
    derivative: BumpDerivative = BumpDerivative.VALUE,
    tol: float = QUADRATURE_TOLERANCE,
    layer: Optional[float] = None,
) -> float:
    """
    Pair a distribution density with a test bump or one of its derivatives

    The area integral is split along the jump locus of the smooth part.

    Args:
        rho: Distribution density
        psi: Test bump with support in t > 0
        derivative: Function of the bump to pair against
        tol: Absolute quadrature tolerance
        layer: Boundary-layer width of the smooth part around its jump

    Returns:
        float: <h, f> + <w delta_C, f>
    """
    psi.require_upper_half()
    test = psi.function(derivative)
    smooth = rho.smooth

    result = adaptive_integrate(
        [lambda x, t: smooth(x, t) * test(x, t)],
        lambda level: rectangle_rule(psi.x_range, psi.t_range, rho.jump_speed, rho.jump_offset, layer, level),
        tol,
    )
    value = result.values[0]
    if rho.delta is not None:
        value += pair_curve(rho.delta, psi, derivative)
    return value


def flux_density(rho: DistributionDensity, u: PiecewiseField) -> DistributionDensity:
    """
    Density of the flux rho*u

    The smooth part is h*u; the delta weight is multiplied by the velocity
    u assigns on its jump locus (u_delta for a delta-shock).
    """
    smooth = rho.smooth
    delta = rho.delta
    if delta is not None:
        if u.on_jump is None:
            raise PreconditionError('velocity needs an on-jump value to carry a delta')
        delta = delta.reweighted(u.on_jump)
    return DistributionDensity(lambda x, t: smooth(x, t) * u(x, t), delta, rho.jump_speed, rho.jump_offset)


def residual_transport(
    rho: DistributionDensity,
    u: PiecewiseField,
    phi: TestBump,
    tol: float = QUADRATURE_TOLERANCE,
    bump_id: int = 0,
) -> TransportResidual:
    """
    Residual <rho, phi_t> + <rho u, phi_x> of the transport equations

    Args:
        rho: Density (smooth part plus optional delta)
        u: Velocity with the same jump locus as rho
        phi: Test bump
        tol: Absolute quadrature tolerance
        bump_id: Row identifier for reports

    Returns:
        TransportResidual: Both pairings and their sum
    """
    density_term = pair_density(rho, phi, BumpDerivative.DT, tol)
    flux_term = pair_density(flux_density(rho, u), phi, BumpDerivative.DX, tol)
    return TransportResidual(bump_id, density_term, flux_term)


def residual_observable(
    d: RiemannData,
    k: Kernel,
    a: FilterScale,
    phi: TestBump,
    tol: float = QUADRATURE_TOLERANCE,
    bump_id: int = 0,
) -> ObservableResidual:
    """
    Grouped residual of the observable continuity equation for the delta-shock

    (i)   <rho, phi_t> + <rho ubar, phi_x>, rho the exact step plus delta
    (ii)  <hbar (u - ubar), phi_x>
    (iii) <alpha^2 hbar_x ubar_x, phi_x>

    Args:
        d: Delta-shock data
        k: Helmholtz kernel
        a: Filter scale
        phi: Test bump
        tol: Absolute quadrature tolerance per term
        bump_id: Row identifier for reports

    Returns:
        ObservableResidual: Terms (i)-(iii); their sum should vanish
    """
    if not k.helmholtz_green:
        raise UnsupportedKernelError(
            f"The observable conservation form is derived for the Helmholtz kernel only, got '{k.name}'",
            {'kernel': k.name},
        )
    phi.require_upper_half()

    profile = filtered_profile(d, k, a)
    solution = profile.solution
    sigma = solution.sigma
    alpha = a.alpha * k.scale
    rho = PiecewiseField(d.rho_l, d.rho_r, sigma)
    u = PiecewiseField(d.u_l, d.u_r, sigma, on_jump=solution.u_delta)

    def area_i(x, t):
        return rho(x, t) * (phi.dt(x, t) + profile.ubar(x, t) * phi.dx(x, t))

    def area_ii(x, t):
        return profile.rhobar_smooth(x, t) * (u(x, t) - profile.ubar(x, t)) * phi.dx(x, t)

    def area_iii(x, t):
        return alpha * alpha * profile.rhobar_x(x, t) * profile.ubar_x(x, t) * phi.dx(x, t)

    result = adaptive_integrate(
        [area_i, area_ii, area_iii],
        lambda level: rectangle_rule(phi.x_range, phi.t_range, sigma, 0.0, alpha, level),
        tol,
    )

    # Delta part of (i): w(t) (phi_t + u_delta phi_x) along the ray
    ray = CurveDelta.ray(sigma, lambda s: solution.weight_rate * s)
    line = pair_curve(ray, phi, BumpDerivative.DT) + pair_curve(ray.reweighted(solution.u_delta), phi, BumpDerivative.DX)

    term_i, term_ii, term_iii = result.values
    residual = ObservableResidual(bump_id, term_i + line, term_ii, term_iii, result.max_error)
    logger.debug(
        f'Observable residual bump {bump_id}: (i)={residual.term_i:.6e} (ii)={term_ii:.6e} '
        f'(iii)={term_iii:.6e} total={residual.total:.3e}'
    )
    return residual


# ============================================================================
# BUILDERS
# ============================================================================

def delta_shock_triple(d: RiemannData, sigma_shift: float = 0.0):
    """
    Exact delta-shock solution as (rho, u)

    sigma_shift displaces the shock ray while keeping u_delta and the
    weight of the unshifted solution, which no longer solves the equations.

    Args:
        d: Delta-shock data
        sigma_shift: Displacement of the ray speed

    Returns:
        Tuple of (DistributionDensity, PiecewiseField)
    """
    solution = classify(d)
    if not solution.is_delta_shock:
        raise CaseError(f'delta_shock_triple requires u_l > u_r, got {solution.case_tag.value}')

    speed = solution.sigma + sigma_shift
    rate = solution.weight_rate
    rho = DistributionDensity.from_field(
        PiecewiseField(d.rho_l, d.rho_r, speed),
        CurveDelta.ray(speed, lambda s: rate * s),
    )
    u = PiecewiseField(d.u_l, d.u_r, speed, on_jump=solution.u_delta)
    return rho, u


def bump_suite(sigma: float, seed: int, count: int = 10) -> List[TestBump]:
    """
    Reproducible suite of test bumps around the ray x = sigma t

    Even-numbered bumps are centered on the ray, odd-numbered ones are
    displaced to either side.

    Args:
        sigma: Shock speed
        seed: Random seed
        count: Number of bumps

    Returns:
        List[TestBump]: Bumps with support in t > 0
    """
    rng = np.random.default_rng(seed)
    bumps = []
    for i in range(count):
        t0 = rng.uniform(*SUITE_T_CENTER)
        rt = rng.uniform(*SUITE_RADIUS)
        rx = rng.uniform(*SUITE_RADIUS)
        x0 = sigma * t0
        if i % 2:
            x0 += rng.choice((-1.0, 1.0)) * rng.uniform(*SUITE_OFFSET)
        bumps.append(TestBump(float(x0), float(t0), float(rx), float(rt)))
    return bumps


def observable_flux(profile: FilteredProfile, x, t) -> np.ndarray:
    """
    Conservation-form flux rho ubar + hbar (u - ubar) + alpha^2 hbar_x ubar_x off the shock

    For the Helmholtz kernel it reduces to rho_l u_l and rho_r u_r on the two sides.
    """
    d = profile.data
    sigma = profile.solution.sigma
    alpha = profile.alpha.alpha
    rho = PiecewiseField(d.rho_l, d.rho_r, sigma)
    u = PiecewiseField(d.u_l, d.u_r, sigma, on_jump=profile.solution.u_delta)
    ubar = profile.ubar(x, t)
    return (rho(x, t) * ubar
            + profile.rhobar_smooth(x, t) * (u(x, t) - ubar)
            + alpha * alpha * profile.rhobar_x(x, t) * profile.ubar_x(x, t))


# ============================================================================
# UTILITY FUNCTIONS
# ============================================================================

def _profile(r: np.ndarray) -> np.ndarray:
    inside = np.abs(r) < 1.0
    gap = np.where(inside, 1.0 - r * r, 1.0)
    with np.errstate(over='ignore', under='ignore'):
        return np.where(inside, np.exp(-1.0 / gap), 0.0)


def _profile_slope(r: np.ndarray) -> np.ndarray:
    inside = np.abs(r) < 1.0
    gap = np.where(inside, 1.0 - r * r, 1.0)
    with np.errstate(over='ignore', under='ignore'):
        return np.where(inside, np.exp(-1.0 / gap) * (-2.0 * r / (gap * gap)), 0.0)


def _side_value(side: Union[float, FieldFn], x: np.ndarray, t: np.ndarray) -> np.ndarray:
    if callable(side):
        return np.asarray(side(x, t), dtype=float)
    return np.full(np.broadcast(x, t).shape, float(side))


def suite_summary(rows: Sequence[Union[ObservableResidual, TransportResidual]]) -> dict:
    """Headline numbers of a residual suite"""
    totals = [abs(r.total) for r in rows]
    return {'bumps': len(rows), 'max_residual': max(totals) if totals else 0.0}
