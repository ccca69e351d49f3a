"""
Observable Transport Lab Kernels
Admissible averaging kernels, admissibility validation and filtering operators
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import integrate, linalg, special

from app.errors import (
    KernelEvaluationError,
    PreconditionError,
    PresetError,
    ResolutionError,
    SolverError,
)


logger = logging.getLogger(__name__)


# ============================================================================
# ENUMS & CONSTANTS
# ============================================================================

class Boundary(Enum):
    """Treatment of a sampled field beyond its grid"""
    PERIODIC = "periodic"
    CONSTANT = "constant-extension"     # Far-field values held constant (Riemann data)


class Condition(Enum):
    """Kernel admissibility conditions"""
    NORMALIZATION = "normalization"     # Integral equals one
    POSITIVITY = "positivity"           # Strictly positive on its support
    MONOTONICITY = "monotonicity"       # Closer offsets get at least as much weight
    EVENNESS = "evenness"               # No preferential direction
    FOURIER_DECAY = "fourier_decay"     # k * g_hat(k) -> 0


# Infinite-support kernels are cut at this many kernel scales
TRUNCATION_RADIUS = 40.0

# Resolution guard: dx/alpha above SAFE warns, above HARD refuses
RESOLUTION_SAFE_RATIO = 0.25
RESOLUTION_HARD_RATIO = 1.0

# Validation tolerances
NORMALIZATION_TOLERANCE = 1e-8
EVENNESS_TOLERANCE = 1e-12
MONOTONICITY_TOLERANCE = 1e-13
SAMPLE_RADIUS = 8.0                     # Sampling window in kernel scales
MIN_VALIDATION_SAMPLES = 16

# Discrete Fourier-decay check
FOURIER_GRID_POINTS = 2 ** 14
FOURIER_WINDOW = 20.0                   # Half-width in kernel scales
FOURIER_DECADE_RATIO = 0.05

# Uniform grid check
UNIFORM_GRID_RTOL = 1e-12


# ============================================================================
# DATA CLASSES
# ============================================================================

@dataclass(frozen=True)
class Kernel:
    """Averaging kernel g with its cumulative tails"""
    name: str
    evaluate: Callable[[np.ndarray], np.ndarray]
    tail_minus: Optional[Callable[[np.ndarray], np.ndarray]] = None   # phi-(x), closed form
    tail_plus: Optional[Callable[[np.ndarray], np.ndarray]] = None    # phi+(x), closed form
    ramp: Optional[Callable[[np.ndarray], np.ndarray]] = None         # Integral of the cdf up to x
    support_radius: float = math.inf
    fourier_decay_hint: Optional[bool] = None
    scale: float = 1.0                  # Characteristic length (alpha after scaling)
    helmholtz_green: bool = False       # Green's function of 1 - scale^2 d^2/dx^2

    def __call__(self, x) -> np.ndarray:
        return self.evaluate(np.asarray(x, dtype=float))

    @property
    def truncation_radius(self) -> float:
        """Radius beyond which the kernel is treated as zero"""
        return min(self.support_radius, TRUNCATION_RADIUS * self.scale)

    def phi_minus(self, x) -> np.ndarray:
        """phi-(x) = integral of g over (-inf, min(x, 0)]"""
        x = np.minimum(np.asarray(x, dtype=float), 0.0)
        if self.tail_minus is not None:
            return np.asarray(self.tail_minus(x), dtype=float)
        return _quadrature_tail(self, x, lower=True)

    def phi_plus(self, x) -> np.ndarray:
        """phi+(x) = integral of g over [max(x, 0), inf)"""
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        if self.tail_plus is not None:
            return np.asarray(self.tail_plus(x), dtype=float)
        return _quadrature_tail(self, x, lower=False)

    def cdf(self, x) -> np.ndarray:
        """Cumulative mass of g up to x"""
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.0, self.phi_minus(x), 1.0 - self.phi_plus(x))

    def cell_mass(self, a, b) -> np.ndarray:
        """Exact mass of g on [a, b], computed from the tail on the cell's side"""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        left = self.phi_minus(b) - self.phi_minus(a)
        right = self.phi_plus(a) - self.phi_plus(b)
        straddle = 1.0 - self.phi_minus(a) - self.phi_plus(b)
        return np.where(b <= 0.0, left, np.where(a >= 0.0, right, straddle))


@dataclass(frozen=True)
class FilterScale:
    """Length scale alpha of the averaging"""
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0.0):
            raise PreconditionError(f'alpha must be positive and finite, got {self.alpha!r}',
                                    {'field': 'alpha'})


@dataclass(frozen=True)
class SampledField:
    """Values on a uniform 1D grid"""
    grid: np.ndarray
    values: np.ndarray
    boundary: Boundary = Boundary.CONSTANT

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, 'grid', grid)
        object.__setattr__(self, 'values', values)

        if grid.ndim != 1 or grid.size < 2:
            raise PreconditionError('grid must be a 1D array with at least two points')
        if values.shape != grid.shape:
            raise PreconditionError('values must have one entry per grid point')

        steps = np.diff(grid)
        if np.any(steps <= 0.0):
            raise PreconditionError('grid must be strictly increasing')
        dx = (grid[-1] - grid[0]) / (grid.size - 1)
        slack = UNIFORM_GRID_RTOL * dx + 16.0 * np.finfo(float).eps * np.max(np.abs(grid))
        if np.max(np.abs(steps - dx)) > slack:
            raise PreconditionError('grid spacing is not uniform')
        if not np.all(np.isfinite(values)):
            raise PreconditionError('field values must be finite')

    @property
    def dx(self) -> float:
        return float((self.grid[-1] - self.grid[0]) / (self.grid.size - 1))

    @classmethod
    def uniform(
        cls,
        x_lo: float,
        x_hi: float,
        n: int,
        fn: Callable[[np.ndarray], np.ndarray],
        boundary: Boundary = Boundary.CONSTANT,
    ) -> 'SampledField':
        """
        Sample fn on a uniform grid

        Periodic grids exclude the right endpoint (it is the image of x_lo).

        Args:
            x_lo: Left end
            x_hi: Right end
            n: Number of grid points
            fn: Vectorized function to sample
            boundary: Boundary treatment

        Returns:
            SampledField: Sampled values
        """
        endpoint = boundary is not Boundary.PERIODIC
        grid = np.linspace(x_lo, x_hi, n, endpoint=endpoint)
        return cls(grid, np.asarray(fn(grid), dtype=float) * np.ones_like(grid), boundary)

    def with_values(self, values: np.ndarray) -> 'SampledField':
        return SampledField(self.grid, values, self.boundary)


@dataclass(frozen=True)
class ConditionResult:
    """Outcome of one admissibility condition"""
    passed: bool
    measure: float
    note: str = ""


@dataclass(frozen=True)
class ValidationReport:
    """Per-condition admissibility report"""
    kernel_name: str
    results: Dict[Condition, ConditionResult] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    @property
    def failed(self) -> Tuple[Condition, ...]:
        return tuple(c for c, r in self.results.items() if not r.passed)

    def to_dict(self) -> Dict:
        return {
            'kernel': self.kernel_name,
            'passed': self.passed,
            'conditions': {
                c.value: {'passed': r.passed, 'measure': r.measure, 'note': r.note}
                for c, r in self.results.items()
            },
        }


# ============================================================================
# KERNEL PRESETS
# ============================================================================

def helmholtz_kernel() -> Kernel:
    """g(x) = exp(-|x|)/2, Green's function of 1 - d^2/dx^2"""
    return Kernel(
        name='helmholtz',
        evaluate=lambda x: 0.5 * np.exp(-np.abs(x)),
        tail_minus=lambda x: 0.5 * np.exp(x),
        tail_plus=lambda x: 0.5 * np.exp(-x),
        ramp=lambda x: np.where(x <= 0.0, 0.5 * np.exp(np.minimum(x, 0.0)), x + 0.5 * np.exp(-np.maximum(x, 0.0))),
        fourier_decay_hint=True,        # g_hat = 1/(1+k^2)
        helmholtz_green=True,
    )


def gaussian_kernel() -> Kernel:
    """Standard normal density"""
    return Kernel(
        name='gaussian',
        evaluate=lambda x: np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi),
        tail_minus=lambda x: special.ndtr(x),
        tail_plus=lambda x: special.ndtr(-x),
        ramp=lambda x: x * special.ndtr(x) + np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi),
        fourier_decay_hint=True,
    )


def tent_kernel() -> Kernel:
    """g(x) = max(0, 1 - |x|)"""
    return Kernel(
        name='tent',
        evaluate=lambda x: np.maximum(0.0, 1.0 - np.abs(x)),
        tail_minus=lambda x: 0.5 * (1.0 + np.maximum(x, -1.0)) ** 2,
        tail_plus=lambda x: 0.5 * (1.0 - np.minimum(x, 1.0)) ** 2,
        ramp=_tent_ramp,
        support_radius=1.0,
        fourier_decay_hint=True,        # g_hat = sinc^2
    )


KERNEL_PRESETS: Dict[str, Callable[[], Kernel]] = {
    'helmholtz': helmholtz_kernel,
    'gaussian': gaussian_kernel,
    'tent': tent_kernel,
}


def kernel_preset(name: str) -> Kernel:
    """
    Resolve a kernel preset by name

    Args:
        name: One of KERNEL_PRESETS

    Returns:
        Kernel: Unscaled preset kernel
    """
    try:
        return KERNEL_PRESETS[name]()
    except KeyError:
        raise PresetError(
            f"Unknown kernel preset '{name}'; see `lab presets` (available: {', '.join(KERNEL_PRESETS)})",
            {'name': name, 'available': list(KERNEL_PRESETS)},
        ) from None


# ============================================================================
# KERNEL OPERATIONS
# ============================================================================

def scale_kernel(k: Kernel, a: FilterScale) -> Kernel:
    """
    Scale a kernel: g_alpha(x) = g(x/alpha)/alpha

    Args:
        k: Base kernel
        a: Filter scale

    Returns:
        Kernel: Scaled kernel, tails phi_alpha(x) = phi(x/alpha)
    """
    alpha = a.alpha
    if alpha == 1.0:
        return k

    return Kernel(
        name=f'{k.name}@{alpha:g}',
        evaluate=lambda x: k.evaluate(np.asarray(x, dtype=float) / alpha) / alpha,
        tail_minus=lambda x: k.phi_minus(np.asarray(x, dtype=float) / alpha),
        tail_plus=lambda x: k.phi_plus(np.asarray(x, dtype=float) / alpha),
        ramp=None if k.ramp is None else (lambda x: alpha * k.ramp(np.asarray(x, dtype=float) / alpha)),
        support_radius=k.support_radius * alpha,
        fourier_decay_hint=k.fourier_decay_hint,
        scale=k.scale * alpha,
        helmholtz_green=k.helmholtz_green,
    )


def tails(k: Kernel, x: float) -> Tuple[float, float]:
    """
    Cumulative tails of the kernel at x

    Args:
        k: Kernel
        x: Finite abscissa

    Returns:
        Tuple of (phi_minus, phi_plus)
    """
    if not math.isfinite(x):
        raise PreconditionError(f'tails requires a finite abscissa, got {x!r}')
    return float(k.phi_minus(x)), float(k.phi_plus(x))


def validate_kernel(k: Kernel, samples: int = 257) -> ValidationReport:
    """
    Check the five admissibility conditions on sampled offsets

    Args:
        k: Kernel to check
        samples: Number of sampled offsets (>= 16)

    Returns:
        ValidationReport: Pass/fail per condition
    """
    if samples < MIN_VALIDATION_SAMPLES:
        raise PreconditionError(f'validate_kernel needs at least {MIN_VALIDATION_SAMPLES} samples, got {samples}')

    radius = min(k.support_radius, SAMPLE_RADIUS * k.scale)
    xs = np.linspace(-radius, radius, samples + 2)[1:-1]
    values = _checked_evaluate(k, xs)
    peak = float(np.max(np.abs(values))) or 1.0

    results: Dict[Condition, ConditionResult] = {}

    # 1. Normalization
    total = _kernel_integral(k)
    results[Condition.NORMALIZATION] = ConditionResult(
        passed=abs(total - 1.0) <= NORMALIZATION_TOLERANCE,
        measure=total,
        note='integral of g',
    )

    # 2. Positivity on the support
    lowest = float(np.min(values))
    results[Condition.POSITIVITY] = ConditionResult(passed=lowest > 0.0, measure=lowest, note='min sampled g')

    # 3. Closer offsets weigh at least as much
    order = np.argsort(np.abs(xs), kind='stable')
    rises = np.diff(values[order])
    worst_rise = float(np.max(rises)) if rises.size else 0.0
    results[Condition.MONOTONICITY] = ConditionResult(
        passed=worst_rise <= MONOTONICITY_TOLERANCE * peak,
        measure=worst_rise,
        note='max increase of g with |x|',
    )

    # 4. Evenness
    mirrored = _checked_evaluate(k, -xs)
    asymmetry = float(np.max(np.abs(values - mirrored)))
    results[Condition.EVENNESS] = ConditionResult(
        passed=asymmetry <= EVENNESS_TOLERANCE * peak,
        measure=asymmetry,
        note='max |g(x) - g(-x)|',
    )

    # 5. Fourier decay
    if k.fourier_decay_hint is not None:
        results[Condition.FOURIER_DECAY] = ConditionResult(
            passed=bool(k.fourier_decay_hint), measure=float('nan'), note='analytic hint')
    else:
        ratio = _fourier_decay_ratio(k)
        results[Condition.FOURIER_DECAY] = ConditionResult(
            passed=ratio < FOURIER_DECADE_RATIO,
            measure=ratio,
            note='max |k g_hat| on top decade / overall max',
        )

    report = ValidationReport(kernel_name=k.name, results=results)
    logger.debug(f'Kernel {k.name} validation: failed={[c.value for c in report.failed]}')
    return report


# ============================================================================
# FILTERING
# ============================================================================

def check_resolution(dx: float, a: FilterScale, context: str = 'filter') -> None:
    """
    Resolution guard for filtering on a grid

    Args:
        dx: Grid spacing
        a: Filter scale
        context: Caller name used in messages
    """
    ratio = dx / a.alpha
    if ratio > RESOLUTION_HARD_RATIO:
        raise ResolutionError(
            f'{context}: dx={dx:.3g} exceeds alpha={a.alpha:.3g}; filter is unresolvable',
            {'dx': dx, 'alpha': a.alpha},
        )
    if ratio > RESOLUTION_SAFE_RATIO:
        logger.warning(f'{context}: dx={dx:.3g} > alpha/4 (alpha={a.alpha:.3g}); filter is under-resolved')


def convolve(f: SampledField, k: Kernel, a: FilterScale) -> SampledField:
    """
    Filter a sampled field by convolution with g_alpha

    Each weight is the exact mass of g_alpha over a grid cell; for
    constant-extension fields the exterior is closed with phi+-.

    Args:
        f: Field to filter
        k: Base kernel
        a: Filter scale

    Returns:
        SampledField: Filtered field on the same grid
    """
    check_resolution(f.dx, a, 'convolve')
    scaled = scale_kernel(k, a)
    return f.with_values(_filter_values(f.values, f.dx, scaled, f.boundary))


def helmholtz_filter(f: SampledField, a: FilterScale) -> SampledField:
    """
    Invert the Helmholtz operator: solve f = fbar - alpha^2 fbar_xx

    Second-order centered differences; zero-gradient closure for
    constant-extension fields, circulant solve for periodic ones.

    Args:
        f: Field to filter
        a: Filter scale

    Returns:
        SampledField: Filtered field on the same grid
    """
    n = f.grid.size
    beta = (a.alpha / f.dx) ** 2

    if f.boundary is Boundary.PERIODIC:
        column = np.zeros(n)
        column[0] = 1.0 + 2.0 * beta
        column[1] -= beta
        column[-1] -= beta
        filtered = linalg.solve_circulant(column, f.values)
    else:
        bands = np.empty((3, n))
        bands[0, :] = -beta
        bands[1, :] = 1.0 + 2.0 * beta
        bands[2, :] = -beta
        bands[1, 0] = bands[1, -1] = 1.0 + beta
        filtered = linalg.solve_banded((1, 1), bands, f.values)

    filtered = np.real_if_close(filtered)
    if not np.all(np.isfinite(filtered)):
        raise SolverError('Helmholtz system produced non-finite values', {'alpha': a.alpha})
    return f.with_values(filtered)


def convolve_points(
    nodes: np.ndarray,
    values: np.ndarray,
    k: Kernel,
    a: FilterScale,
    targets: Optional[np.ndarray] = None,
    points_per_alpha: int = 8,
) -> np.ndarray:
    """
    Filter a piecewise-linear field given on increasing, possibly clustered nodes

    The field is resampled on an auxiliary uniform grid, filtered with
    constant extension beyond the node hull, and read back by interpolation.

    Args:
        nodes: Strictly increasing abscissae
        values: Field value per node
        k: Base kernel
        a: Filter scale
        targets: Where to evaluate the filtered field (default: the nodes)
        points_per_alpha: Auxiliary grid density

    Returns:
        np.ndarray: Filtered values at targets
    """
    nodes = np.asarray(nodes, dtype=float)
    lo, hi = float(nodes[0]), float(nodes[-1])
    n = max(int(math.ceil((hi - lo) * points_per_alpha / a.alpha)) + 1, 2)
    grid = np.linspace(lo, hi, n)

    field_ = SampledField(grid, np.interp(grid, nodes, values), Boundary.CONSTANT)
    filtered = _filter_values(field_.values, field_.dx, scale_kernel(k, a), Boundary.CONSTANT)

    where = nodes if targets is None else np.asarray(targets, dtype=float)
    return np.interp(where, grid, filtered)


# ============================================================================
# INTERNAL HELPERS
# ============================================================================

def _checked_evaluate(k: Kernel, xs: np.ndarray) -> np.ndarray:
    values = np.asarray(k(xs), dtype=float) * np.ones_like(xs)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise KernelEvaluationError(float(xs[i]), float(values[i]))
    return values


def _kernel_integral(k: Kernel) -> float:
    reach = k.truncation_radius
    scalar = lambda y: float(k(y))
    left, _ = integrate.quad(scalar, -reach, 0.0, limit=200)
    right, _ = integrate.quad(scalar, 0.0, reach, limit=200)
    total = left + right
    if not math.isfinite(total):
        raise KernelEvaluationError(0.0, total)
    return total


def _quadrature_tail(k: Kernel, x: np.ndarray, lower: bool) -> np.ndarray:
    reach = k.truncation_radius
    scalar = lambda y: float(k(y))

    def one(point: float) -> float:
        if lower:
            if point <= -reach:
                return 0.0
            return integrate.quad(scalar, -reach, point, limit=200)[0]
        if point >= reach:
            return 0.0
        return integrate.quad(scalar, point, reach, limit=200)[0]

    return np.vectorize(one, otypes=[float])(x)


def _fourier_decay_ratio(k: Kernel) -> float:
    half_width = FOURIER_WINDOW * k.scale
    if math.isfinite(k.support_radius):
        half_width = max(half_width, 1.5 * k.support_radius)

    n = FOURIER_GRID_POINTS
    dx = 2.0 * half_width / n
    xs = -half_width + dx * np.arange(n)
    spectrum = dx * np.abs(np.fft.rfft(_checked_evaluate(k, xs)))
    wavenumbers = 2.0 * np.pi * np.fft.rfftfreq(n, dx)

    weighted = wavenumbers * spectrum
    top_decade = wavenumbers >= wavenumbers[-1] / 10.0
    return float(np.max(weighted[top_decade]) / np.max(weighted))


def _filter_values(values: np.ndarray, dx: float, scaled: Kernel, boundary: Boundary) -> np.ndarray:
    """Cell-mass convolution of grid values with an already scaled kernel"""
    reach = scaled.truncation_radius
    half = max(int(math.ceil(reach / dx)), 1)

    # Source cell at offset j (in cells) from the target carries mass of g on [-(j+1/2)dx, -(j-1/2)dx]
    offsets = np.arange(-half, half + 1, dtype=float)
    weights = scaled.cell_mass(-(offsets + 0.5) * dx, -(offsets - 0.5) * dx)
    beyond_left = float(scaled.phi_plus((half + 0.5) * dx))
    beyond_right = float(scaled.phi_minus(-(half + 0.5) * dx))

    mode = 'wrap' if boundary is Boundary.PERIODIC else 'edge'
    padded = np.pad(values, half, mode=mode)

    filtered = np.correlate(padded, weights, mode='valid')
    filtered += beyond_left * padded[: values.size]
    filtered += beyond_right * padded[2 * half: 2 * half + values.size]
    return filtered


def _tent_ramp(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    left = (1.0 + np.clip(x, -1.0, 0.0)) ** 3 / 6.0
    right = x + (1.0 - np.clip(x, 0.0, 1.0)) ** 3 / 6.0
    return np.where(x <= 0.0, left, right)
