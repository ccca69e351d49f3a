"""
Observable Transport Lab Broad Solver
Fixed-point (Picard) solution of the observable continuity equation along characteristics
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import integrate

from app.errors import ConvergenceError, DeterminacyError, DomainError, PreconditionError
from app.utils.characteristics import LagrangianMap, particle_filtered_velocity
from app.utils.kernels import Boundary, FilterScale, Kernel, SampledField, check_resolution, convolve


logger = logging.getLogger(__name__)

VelocityFn = Callable[[np.ndarray, float], np.ndarray]
DensityFn = Callable[[np.ndarray], np.ndarray]


# ============================================================================
# ENUMS & CONSTANTS
# ============================================================================

GRADIENT_HEADROOM = 1.05                # L = 1.05 * sampled max |u_x|
CONTRACTION_CONSTANT = 0.5
DEFAULT_RATIO_SLACK = 0.05
CERTIFICATE_SAMPLES = 50
TRACE_SUBSTEPS = 2                      # RK4 substeps per time-grid interval
EXIT_TOLERANCE = 1e-9                   # Relative to the interval width


# ============================================================================
# DATA CLASSES
# ============================================================================

@dataclass(frozen=True)
class SolvedVelocity:
    """Velocity u with gradient u_x and filtered velocity ubar, all as functions of (x, t)"""
    u: VelocityFn
    u_x: VelocityFn
    ubar: VelocityFn
    max_speed: float                    # Bound on |ubar|

    @classmethod
    def analytic(cls, u: VelocityFn, u_x: VelocityFn, ubar: VelocityFn, max_speed: float) -> 'SolvedVelocity':
        if not (math.isfinite(max_speed) and max_speed >= 0.0):
            raise PreconditionError(f'max_speed must be a finite bound, got {max_speed!r}')
        return cls(u, u_x, ubar, float(max_speed))

    @classmethod
    def from_map(cls, m: LagrangianMap, k: Kernel, a: FilterScale) -> 'SolvedVelocity':
        """
        Velocity of a particle solution, interpolated in x and linearly in t between snapshots

        u = u0(s), u_x = u0'(s) / (d phi / d s) and ubar from the filtered
        particle velocities; values beyond the particle hull are held constant.
        """
        s_slope = m.ic.u0_prime(m.seeds) / m.jacobian_estimates
        filtered = np.vstack([particle_filtered_velocity(p, m.velocities, k, a) for p in m.positions])

        def blend(values: np.ndarray) -> VelocityFn:
            def evaluate(x, t):
                x = np.asarray(x, dtype=float)
                if m.times.size == 1:
                    return np.interp(x, m.positions[0], values[0])
                j = int(np.clip(np.searchsorted(m.times, t, side="right") - 1, 0, m.times.size - 2))
                w = float(np.clip((t - m.times[j]) / (m.times[j + 1] - m.times[j]), 0.0, 1.0))
                lower = np.interp(x, m.positions[j], values[j])
                upper = np.interp(x, m.positions[j + 1], values[j + 1])
                return (1.0 - w) * lower + w * upper
            return evaluate

        carried = np.broadcast_to(m.velocities, m.positions.shape)
        return cls(blend(carried), blend(s_slope), blend(filtered), float(np.max(np.abs(filtered))))


@dataclass(frozen=True)
class DeterminacyCertificate:
    """Backward characteristics traced from the boundary of D"""
    samples: int
    all_inside: bool
    min_margin: float                   # Smallest distance to the edge of the solved region


@dataclass(frozen=True)
class DomainOfDeterminacy:
    """
    Space-time region whose backward characteristics stay in the solved region

    The final-time interval is [x_lo, x_hi]; at earlier times t the region
    widens to [outer_lo + V t, outer_hi - V t] with V the speed bound.
    """
    x_lo: float
    x_hi: float
    t_end: float
    outer: Tuple[float, float]
    speed: float
    x: np.ndarray                       # Sampling grid over the outer interval
    t: np.ndarray
    certificate: DeterminacyCertificate

    @property
    def mask(self) -> np.ndarray:
        """(n_t, n_x) samples inside the region"""
        slack = EXIT_TOLERANCE * (self.outer[1] - self.outer[0])
        lo = self.outer[0] + self.speed * self.t[:, None] - slack
        hi = self.outer[1] - self.speed * self.t[:, None] + slack
        return (self.x[None, :] >= lo) & (self.x[None, :] <= hi)

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    def field(self, values: np.ndarray) -> 'SpaceTimeField':
        return SpaceTimeField(self.x, self.t, np.asarray(values, dtype=float), self.mask)


@dataclass(frozen=True)
class SpaceTimeField:
    """Samples v(x_i, t_j) stored as values[j, i]; only masked samples are meaningful"""
    x: np.ndarray
    t: np.ndarray
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.t.size, self.x.size) or self.mask.shape != self.values.shape:
            raise PreconditionError('space-time field shape does not match its grid')

    def with_values(self, values: np.ndarray) -> 'SpaceTimeField':
        return SpaceTimeField(self.x, self.t, np.asarray(values, dtype=float), self.mask)

    def __sub__(self, other: 'SpaceTimeField') -> 'SpaceTimeField':
        return self.with_values(self.values - other.values)


@dataclass(frozen=True)
class WeightedSpace:
    """Sup-norm weighted by exp(-2 L t)"""
    L: float

    def norm(self, v: SpaceTimeField) -> float:
        return weighted_norm(v, self.L)


@dataclass(frozen=True)
class CharacteristicNet:
    """Backward characteristics from every grid sample: feet[j, m, i] is the position at t_m of the curve from (x_i, t_j)"""
    feet: np.ndarray
    slopes: np.ndarray                  # u_x along the curves


@dataclass
class BroadSolution:
    """Converged fixed point with its iteration history"""
    iterates: Tuple[SpaceTimeField, ...]    # Last iterates, oldest first
    final_residual: float
    contraction_ratios: List[float] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)
    L: float = 0.0
    converged: bool = True
    ratio_breaches: List[int] = field(default_factory=list)    # Iterations whose ratio exceeded the limit

    @property
    def rho(self) -> SpaceTimeField:
        return self.iterates[-1]

    @property
    def iterates_kept(self) -> int:
        return len(self.iterates)

    @property
    def contraction_held(self) -> bool:
        return not self.ratio_breaches

    @property
    def iterations(self) -> int:
        return len(self.residuals)

    @property
    def max_ratio(self) -> float:
        return max(self.contraction_ratios) if self.contraction_ratios else 0.0

    def history_rows(self) -> List[List[float]]:
        rows = []
        for m, residual in enumerate(self.residuals):
            ratio = self.contraction_ratios[m - 1] if 0 < m <= len(self.contraction_ratios) else float('nan')
            rows.append([m + 1, residual, ratio])
        return rows


@dataclass(frozen=True)
class LipschitzReport:
    """Sampled check of |H[r1] - H[r2]| <= L exp(2 L t) ||r1 - r2||"""
    L: float
    max_ratio: float                    # Largest observed lhs / rhs

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0 + 1e-9


# ============================================================================
# DOMAIN & NORM
# ============================================================================

def build_domain(
    u_field: SolvedVelocity,
    target: Tuple[float, float],
    t_end: float,
    n_x: int = 201,
    n_t: int = 41,
    certificate_samples: int = CERTIFICATE_SAMPLES,
) -> DomainOfDeterminacy:
    """
    Inset the target interval so backward characteristics stay where the velocity is solved

    Args:
        u_field: Solved velocity on target x [0, t_end]
        target: Solved interval (lo, hi)
        t_end: Final time
        n_x: Spatial samples over the target interval
        n_t: Time samples over [0, t_end]
        certificate_samples: Boundary characteristics traced for the certificate

    Returns:
        DomainOfDeterminacy: Region, sampling grid and certificate
    """
    lo, hi = target
    if not t_end > 0.0:
        raise PreconditionError(f'build_domain needs t_end > 0, got {t_end!r}')
    inset = t_end * u_field.max_speed
    x_lo, x_hi = lo + inset, hi - inset
    if x_lo >= x_hi:
        raise DomainError(
            f'domain too small: inset {inset:.4g} on each side empties [{lo:g}, {hi:g}]',
            {'inset': inset, 'target': [lo, hi]},
        )

    x = np.linspace(lo, hi, n_x)
    t = np.linspace(0.0, t_end, n_t)

    half = certificate_samples // 2
    starts_x = np.concatenate([np.full(half, x_lo), np.full(certificate_samples - half, x_hi)])
    starts_t = np.concatenate([np.linspace(0.0, t_end, half), np.linspace(0.0, t_end, certificate_samples - half)])
    margins = [_trace_margin(u_field, xs, ts, lo, hi, 4 * n_t) for xs, ts in zip(starts_x, starts_t)]
    certificate = DeterminacyCertificate(certificate_samples, min(margins) >= -EXIT_TOLERANCE * (hi - lo), min(margins))

    logger.info(f'Domain of determinacy: [{x_lo:.4g}, {x_hi:.4g}] x [0, {t_end:g}], certificate ok={certificate.all_inside}')
    return DomainOfDeterminacy(x_lo, x_hi, t_end, (lo, hi), u_field.max_speed, x, t, certificate)


def weighted_norm(v: SpaceTimeField, L: float) -> float:
    """
    Weighted sup-norm: max over masked samples of exp(-2 L t) |v|

    Args:
        v: Sampled field
        L: Gradient bound

    Returns:
        float: Weighted norm
    """
    weight = np.exp(-2.0 * L * v.t)[:, None]
    weighted = np.where(v.mask, weight * np.abs(v.values), 0.0)
    return float(np.max(weighted))


def gradient_bound(u_solved: SolvedVelocity, D: DomainOfDeterminacy, net: Optional[CharacteristicNet] = None) -> float:
    """L = 1.05 * max |u_x| sampled on the grid and along the characteristics"""
    grid_max = max(float(np.max(np.abs(u_solved.u_x(D.x, float(t))))) for t in D.t)
    if net is not None:
        grid_max = max(grid_max, float(np.nanmax(np.abs(net.slopes))))
    return GRADIENT_HEADROOM * grid_max


# ============================================================================
# CONTRACTION MAP
# ============================================================================

def trace_characteristics(u_solved: SolvedVelocity, D: DomainOfDeterminacy) -> CharacteristicNet:
    """
    Backward characteristics dx/dt = ubar(x, t) from every grid sample

    Args:
        u_solved: Solved velocity
        D: Domain with its sampling grid

    Returns:
        CharacteristicNet: Feet and u_x at every earlier grid time
    """
    x, ts = D.x, D.t
    n_t = ts.size
    feet = np.full((n_t, n_t, x.size), np.nan)
    slopes = np.full_like(feet, np.nan)
    current = np.tile(x, (n_t, 1))

    for m in range(n_t - 1, -1, -1):
        feet[m:, m, :] = current[m:]
        slopes[m:, m, :] = u_solved.u_x(current[m:], float(ts[m]))
        if m > 0:
            current[m:] = _rk4_backward(u_solved, current[m:], float(ts[m]), float(ts[m - 1]), TRACE_SUBSTEPS)

    lo, hi = D.outer
    slack = EXIT_TOLERANCE * (hi - lo)
    mask = D.mask
    for j in range(n_t):
        rows = feet[j, : j + 1][:, mask[j]]
        if rows.size and (np.min(rows) < lo - slack or np.max(rows) > hi + slack):
            raise DeterminacyError(
                f'characteristic from t={ts[j]:g} leaves the solved interval [{lo:g}, {hi:g}]',
                {'t': float(ts[j])},
            )
    np.clip(feet, lo, hi, out=feet)
    return CharacteristicNet(feet, slopes)


def h_operator(rho: SpaceTimeField, u_solved: SolvedVelocity, k: Kernel, a: FilterScale) -> SpaceTimeField:
    """H[rho](x, t) = -rhobar(x, t) u_x(x, t) on the sampling grid"""
    rhobar = _filtered_rows(rho, k, a)
    slopes = np.vstack([u_solved.u_x(rho.x, float(t)) for t in rho.t])
    return rho.with_values(-rhobar * slopes)


def apply_T(
    rho_m: SpaceTimeField,
    rho0: DensityFn,
    u_solved: SolvedVelocity,
    k: Kernel,
    a: FilterScale,
    D: DomainOfDeterminacy,
    net: Optional[CharacteristicNet] = None,
) -> SpaceTimeField:
    """
    One application of T: rho0 at the foot plus the integral of H[rho_m] along the characteristic

    Args:
        rho_m: Current iterate
        rho0: Initial density
        u_solved: Solved velocity
        k: Kernel used for rhobar
        a: Filter scale
        D: Domain of determinacy
        net: Precomputed characteristics (traced here when omitted)

    Returns:
        SpaceTimeField: T rho_m on the same grid
    """
    if net is None:
        net = trace_characteristics(u_solved, D)

    rhobar = _filtered_rows(rho_m, k, a)
    ts = D.t
    out = np.empty_like(rho_m.values)
    for j in range(ts.size):
        feet = net.feet[j, : j + 1]
        foot_value = np.asarray(rho0(feet[0]), dtype=float) * np.ones(D.x.size)
        if j == 0:
            out[j] = foot_value
            continue
        along = np.vstack([np.interp(feet[m], D.x, rhobar[m]) for m in range(j + 1)])
        source = -along * net.slopes[j, : j + 1]
        out[j] = foot_value + integrate.trapezoid(source, ts[: j + 1], axis=0)
    return rho_m.with_values(out)


def solve_broad(
    rho0: DensityFn,
    u_solved: SolvedVelocity,
    k: Kernel,
    a: FilterScale,
    D: DomainOfDeterminacy,
    tol: float = 1e-10,
    max_iter: int = 60,
    start: Optional[SpaceTimeField] = None,
    ratio_slack: float = DEFAULT_RATIO_SLACK,
) -> BroadSolution:
    """
    Picard iteration rho^(m+1) = T rho^(m) in the weighted sup-norm

    Args:
        rho0: Initial density
        u_solved: Solved velocity
        k: Kernel
        a: Filter scale
        D: Domain of determinacy
        tol: Stop when successive iterates differ by less than tol
        max_iter: Iteration cap
        start: Starting iterate (default rho0(x) at every time)
        ratio_slack: Allowance above the contraction constant 1/2; larger ratios are recorded as breaches

    Returns:
        BroadSolution: Fixed point with residual and ratio history
    """
    if not tol > 0.0:
        raise PreconditionError(f'tol must be positive, got {tol!r}')
    check_resolution(D.dx, a, 'solve_broad')

    net = trace_characteristics(u_solved, D)
    L = gradient_bound(u_solved, D, net)
    current = start if start is not None else D.field(np.tile(np.asarray(rho0(D.x), dtype=float) * np.ones(D.x.size), (D.t.size, 1)))

    limit = CONTRACTION_CONSTANT + ratio_slack
    residuals: List[float] = []
    ratios: List[float] = []
    breaches: List[int] = []
    for iteration in range(1, max_iter + 1):
        following = apply_T(current, rho0, u_solved, k, a, D, net)
        residual = weighted_norm(following - current, L)
        if residuals and residuals[-1] > 0.0:
            ratios.append(residual / residuals[-1])
            if ratios[-1] > limit:
                breaches.append(iteration)
                logger.warning(f'Contraction ratio {ratios[-1]:.3f} above {limit:.2f} at iteration {iteration}')
        residuals.append(residual)
        logger.debug(f'Broad iteration {iteration}: residual={residual:.3e}')
        previous, current = current, following
        if residual < tol:
            logger.info(f'Broad solution converged in {iteration} iterations (L={L:.4g}, max ratio={max(ratios, default=0.0):.3f})')
            return BroadSolution((previous, current), residual, ratios, residuals, L, ratio_breaches=breaches)

    raise ConvergenceError(
        f'Broad iteration did not reach tol={tol:.1e} in {max_iter} iterations (last residual {residuals[-1]:.3e})',
        {'residuals': residuals, 'ratios': ratios},
    )


def lipschitz_check(
    rho_1: SpaceTimeField,
    rho_2: SpaceTimeField,
    u_solved: SolvedVelocity,
    k: Kernel,
    a: FilterScale,
    L: float,
) -> LipschitzReport:
    """
    Compare |H[rho_1] - H[rho_2]| with L exp(2 L t) ||rho_1 - rho_2|| on every masked sample

    Args:
        rho_1: First field
        rho_2: Second field
        u_solved: Solved velocity
        k: Kernel
        a: Filter scale
        L: Gradient bound

    Returns:
        LipschitzReport: Largest ratio of the two sides
    """
    gap = weighted_norm(rho_1 - rho_2, L)
    if gap == 0.0:
        return LipschitzReport(L, 0.0)
    lhs = np.abs(h_operator(rho_1, u_solved, k, a).values - h_operator(rho_2, u_solved, k, a).values)
    rhs = L * np.exp(2.0 * L * rho_1.t)[:, None] * gap
    quotient = np.divide(lhs, rhs, out=np.where(lhs > 0.0, np.inf, 0.0), where=rhs > 0.0)
    ratio = np.where(rho_1.mask, quotient, 0.0)
    return LipschitzReport(L, float(np.max(ratio)))


# ============================================================================
# UTILITY FUNCTIONS
# ============================================================================

def _filtered_rows(rho: SpaceTimeField, k: Kernel, a: FilterScale) -> np.ndarray:
    """Filter every time row; samples outside the mask take the nearest masked value"""
    rows = []
    for values, inside in zip(rho.values, rho.mask):
        idx = np.flatnonzero(inside)
        if idx.size == 0:
            rows.append(np.zeros_like(values))
            continue
        filled = values.copy()
        filled[: idx[0]] = values[idx[0]]
        filled[idx[-1] + 1:] = values[idx[-1]]
        rows.append(convolve(SampledField(rho.x, filled, Boundary.CONSTANT), k, a).values)
    return np.vstack(rows)


def _rk4_backward(u_solved: SolvedVelocity, x: np.ndarray, t_from: float, t_to: float, substeps: int) -> np.ndarray:
    h = (t_to - t_from) / substeps
    t = t_from
    for _ in range(substeps):
        k1 = u_solved.ubar(x, t)
        k2 = u_solved.ubar(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = u_solved.ubar(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = u_solved.ubar(x + h * k3, t + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return x


def _trace_margin(u_solved: SolvedVelocity, x0: float, t0: float, lo: float, hi: float, steps: int) -> float:
    """Smallest distance to the edges of [lo, hi] along the backward characteristic from (x0, t0)"""
    x = np.array([x0], dtype=float)
    margin = min(x0 - lo, hi - x0)
    if t0 <= 0.0:
        return margin
    h = t0 / steps
    for i in range(steps):
        t = t0 - i * h
        x = _rk4_backward(u_solved, x, t, t - h, 1)
        margin = min(margin, float(x[0] - lo), float(hi - x[0]))
    return margin
