"""
Observable Transport Lab Riemann Solutions
Exact Riemann solutions (vacuum, contact, delta-shock) and closed-form filtered profiles
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Union

import numpy as np

from app.errors import CaseError, DomainError
from app.utils.kernels import FilterScale, Kernel, scale_kernel


logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


# ============================================================================
# ENUMS & CONSTANTS
# ============================================================================

class RiemannCase(Enum):
    """Wave pattern selected by the sign of u_l - u_r"""
    VACUUM = "vacuum"                   # u_l < u_r: two contacts around a vacuum
    CONTACT = "contact"                 # u_l = u_r
    DELTA_SHOCK = "delta-shock"         # u_l > u_r: mass concentrates on x = sigma t


class PointClass(Enum):
    """Classification of a pointwise evaluation"""
    REGULAR = "regular"
    ON_SHOCK = "on-shock"


# Points within this relative distance of the shock ray count as on it
ON_SHOCK_TOLERANCE = 1e-14


# ============================================================================
# DATA CLASSES
# ============================================================================

@dataclass(frozen=True)
class RiemannData:
    """Piecewise-constant initial state: (rho_l, u_l) for x < 0, (rho_r, u_r) for x > 0"""
    rho_l: float
    u_l: float
    rho_r: float
    u_r: float

    def __post_init__(self):
        for name in ('rho_l', 'u_l', 'rho_r', 'u_r'):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f'{name} must be finite, got {value!r}', {'field': name})
        if self.rho_l < 0.0 or self.rho_r < 0.0:
            raise DomainError(
                f'densities must be nonnegative, got rho_l={self.rho_l}, rho_r={self.rho_r}',
                {'rho_l': self.rho_l, 'rho_r': self.rho_r},
            )

    @property
    def density_jump(self) -> float:
        """[rho] = rho_l - rho_r"""
        return self.rho_l - self.rho_r

    @property
    def flux_jump(self) -> float:
        """[rho u] = rho_l u_l - rho_r u_r"""
        return self.rho_l * self.u_l - self.rho_r * self.u_r

    def scaled(self, factor: float) -> 'RiemannData':
        """Both densities multiplied by factor"""
        return RiemannData(self.rho_l * factor, self.u_l, self.rho_r * factor, self.u_r)

    def shifted(self, c: float) -> 'RiemannData':
        """Both velocities shifted by c"""
        return RiemannData(self.rho_l, self.u_l + c, self.rho_r, self.u_r + c)


@dataclass(frozen=True)
class RiemannSolution:
    """Wave structure of an exact Riemann solution"""
    data: RiemannData
    case_tag: RiemannCase
    sigma: float                        # Shock or contact speed; mean speed for vacuum
    u_delta: float
    weight_rate: float                  # w(t) = weight_rate * t

    @property
    def is_delta_shock(self) -> bool:
        return self.case_tag is RiemannCase.DELTA_SHOCK

    @property
    def arclength_factor(self) -> float:
        """sqrt(1 + sigma^2) along the ray x = sigma t"""
        return math.sqrt(1.0 + self.sigma * self.sigma)

    def to_dict(self) -> dict:
        return {
            'case': self.case_tag.value,
            'sigma': self.sigma,
            'u_delta': self.u_delta,
            'weight_rate': self.weight_rate,
        }


@dataclass(frozen=True)
class ExactValue:
    """Pointwise value of the exact solution"""
    point_class: PointClass
    rho: float                          # Absolutely continuous part (mean of sides on the shock)
    u: float

    @property
    def on_shock(self) -> bool:
        return self.point_class is PointClass.ON_SHOCK


@dataclass(frozen=True)
class FilteredProfile:
    """
    Closed-form filtered fields of the delta-shock solution

    With xi = x - sigma t the filtered step velocity is
        ubar = u_l + (u_r - u_l) phi-(xi/alpha)   for xi < 0
        ubar = u_r - (u_r - u_l) phi+(xi/alpha)   for xi > 0
    and u_delta on the ray; the smooth density part follows the same
    pattern with (rho_l, rho_r). Both derivatives are the jump times g_alpha(xi).
    """
    solution: RiemannSolution
    kernel: Kernel
    alpha: FilterScale

    @property
    def data(self) -> RiemannData:
        return self.solution.data

    def ubar(self, x: ArrayLike, t: ArrayLike) -> ArrayLike:
        d = self.data
        return self._filtered_step(x, t, d.u_l, d.u_r, self.solution.u_delta)

    def rhobar_smooth(self, x: ArrayLike, t: ArrayLike) -> ArrayLike:
        d = self.data
        return self._filtered_step(x, t, d.rho_l, d.rho_r, None)

    def ubar_x(self, x: ArrayLike, t: ArrayLike) -> ArrayLike:
        d = self.data
        return _scalar_or_array((d.u_r - d.u_l) * self._scaled()(self._offset(x, t)))

    def rhobar_x(self, x: ArrayLike, t: ArrayLike) -> ArrayLike:
        d = self.data
        return _scalar_or_array((d.rho_r - d.rho_l) * self._scaled()(self._offset(x, t)))

    def _scaled(self) -> Kernel:
        return scale_kernel(self.kernel, self.alpha)

    def _offset(self, x: ArrayLike, t: ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0):
            raise DomainError('filtered profile requires t >= 0')
        return np.asarray(x, dtype=float) - self.solution.sigma * t

    def _filtered_step(self, x, t, left_value, right_value, on_ray_value):
        xi = self._offset(x, t) / self.alpha.alpha
        jump = right_value - left_value
        left = left_value + jump * self.kernel.phi_minus(xi)
        right = right_value - jump * self.kernel.phi_plus(xi)
        if on_ray_value is None:
            on_ray_value = left_value + jump * self.kernel.phi_minus(0.0)
        return _scalar_or_array(np.where(xi < 0.0, left, np.where(xi > 0.0, right, on_ray_value)))


# ============================================================================
# RIEMANN ENGINE
# ============================================================================

def classify(d: RiemannData) -> RiemannSolution:
    """
    Select the wave pattern and the delta-shock parameters

    Brackets are [q] = q_l - q_r.

    Args:
        d: Riemann data

    Returns:
        RiemannSolution: Case tag with sigma, u_delta and weight rate
    """
    if d.rho_l < 0.0 or d.rho_r < 0.0:
        raise DomainError('densities must be nonnegative')

    mean_speed = 0.5 * (d.u_l + d.u_r)

    if d.u_l > d.u_r:
        sigma = mean_speed
        weight_rate = (d.flux_jump - sigma * d.density_jump) / math.sqrt(1.0 + sigma * sigma)
        solution = RiemannSolution(d, RiemannCase.DELTA_SHOCK, sigma, sigma, weight_rate)
    elif d.u_l == d.u_r:
        solution = RiemannSolution(d, RiemannCase.CONTACT, d.u_l, d.u_l, 0.0)
    else:
        solution = RiemannSolution(d, RiemannCase.VACUUM, mean_speed, mean_speed, 0.0)

    logger.debug(f'Classified {d} as {solution.case_tag.value} (sigma={solution.sigma:g})')
    return solution


def evaluate_exact(d: RiemannData, x: float, t: float) -> ExactValue:
    """
    Pointwise exact solution

    Points on the delta-shock ray are flagged instead of returning a
    density; the concentrated mass is reported by shock_weight.

    Args:
        d: Riemann data
        x: Position
        t: Time (> 0)

    Returns:
        ExactValue: Point class with (rho, u)
    """
    if not t > 0.0:
        raise DomainError(f'evaluate_exact requires t > 0, got {t!r}')

    solution = classify(d)
    left = ExactValue(PointClass.REGULAR, d.rho_l, d.u_l)
    right = ExactValue(PointClass.REGULAR, d.rho_r, d.u_r)

    if solution.case_tag is RiemannCase.VACUUM:
        if x < d.u_l * t:
            return left
        if x > d.u_r * t:
            return right
        return ExactValue(PointClass.REGULAR, 0.0, x / t)

    ray = solution.sigma * t
    if abs(x - ray) <= ON_SHOCK_TOLERANCE * max(1.0, abs(x)):
        if solution.is_delta_shock:
            return ExactValue(PointClass.ON_SHOCK, 0.5 * (d.rho_l + d.rho_r), solution.u_delta)
        return left
    return left if x < ray else right


def shock_weight(d: RiemannData, t: float) -> float:
    """
    Weight w(t) of the delta on the shock curve (per unit arclength)

    Args:
        d: Delta-shock data
        t: Time (>= 0)

    Returns:
        float: weight_rate * t
    """
    solution = _require_delta_shock(d, 'shock_weight')
    if t < 0.0:
        raise DomainError(f'shock_weight requires t >= 0, got {t!r}')
    return solution.weight_rate * t


def spatial_delta_mass(d: RiemannData, t: float) -> float:
    """Mass carried by the delta in an x-slice at time t: sqrt(1+sigma^2) w(t)"""
    solution = _require_delta_shock(d, 'spatial_delta_mass')
    return solution.arclength_factor * shock_weight(d, t)


def filtered_velocity(d: RiemannData, k: Kernel, a: FilterScale, x: ArrayLike, t: ArrayLike) -> ArrayLike:
    """
    Filtered velocity of the step u transported along x = sigma t

    Args:
        d: Riemann data
        k: Admissible kernel
        a: Filter scale
        x: Position(s)
        t: Time(s), t >= 0

    Returns:
        Filtered velocity, u_delta on the ray
    """
    return FilteredProfile(classify(d), k, a).ubar(x, t)


def filtered_profile(d: RiemannData, k: Kernel, a: FilterScale) -> FilteredProfile:
    """
    Closed-form filtered fields for delta-shock data

    Args:
        d: Delta-shock data
        k: Admissible kernel (closed-form tails or quadrature-backed)
        a: Filter scale

    Returns:
        FilteredProfile: ubar, smooth rhobar and their x-derivatives
    """
    return FilteredProfile(_require_delta_shock(d, 'filtered_profile'), k, a)


# ============================================================================
# UTILITY FUNCTIONS
# ============================================================================

def _require_delta_shock(d: RiemannData, operation: str) -> RiemannSolution:
    solution = classify(d)
    if not solution.is_delta_shock:
        raise CaseError(
            f'{operation} requires delta-shock data (u_l > u_r); got {solution.case_tag.value}',
            {'case': solution.case_tag.value},
        )
    return solution


def _scalar_or_array(values: np.ndarray) -> ArrayLike:
    values = np.asarray(values, dtype=float)
    return float(values) if values.ndim == 0 else values
