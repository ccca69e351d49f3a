"""
Observable Transport Lab Eulerian Solver
Upwind finite differences for rho_t + rhobar u_x + ubar rho_x = 0, u_t + ubar u_x = 0
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy import integrate

from app.errors import DomainError, InstabilityError, PreconditionError
from app.utils.kernels import Boundary, FilterScale, Kernel, SampledField, check_resolution, convolve, helmholtz_filter
from app.utils.riemann_exact import RiemannData, classify, filtered_velocity, spatial_delta_mass


logger = logging.getLogger(__name__)


# ============================================================================
# ENUMS & CONSTANTS
# ============================================================================

SPEED_FLOOR = 1e-12                     # Guards the CFL denominator for an all-zero velocity
NEGATIVE_TOLERANCE = 1e-12
CLIPPED_MASS_LIMIT = 1e-8               # Relative to total mass
WINDOW_ALPHAS = 5.0                     # Default window half-width: 5 alpha + 5 dx
WINDOW_CELLS = 5.0
SWEEP_NOISE = 0.10                      # Allowed relative worsening between sweep rows
SWEEP_FLOOR = 1e-3                      # Errors below this count as converged


# ============================================================================
# DATA CLASSES
# ============================================================================

@dataclass(frozen=True)
class GridState:
    """Eulerian fields on a uniform grid"""
    grid: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    alpha: FilterScale
    kernel: Kernel
    time: float = 0.0
    boundary: Boundary = Boundary.CONSTANT
    clipped_mass: float = 0.0           # Audit: negative density removed so far
    steps: int = 0

    def __post_init__(self):
        if not (self.grid.shape == self.rho.shape == self.u.shape):
            raise PreconditionError('grid, rho and u must have the same length')
        if np.any(self.rho < -NEGATIVE_TOLERANCE):
            raise PreconditionError('density must be nonnegative')

    @property
    def dx(self) -> float:
        return float(self.grid[1] - self.grid[0])

    def total_mass(self) -> float:
        if self.boundary is Boundary.PERIODIC:
            return float(np.sum(self.rho) * self.dx)
        return float(integrate.trapezoid(self.rho, self.grid))

    def ubar(self) -> np.ndarray:
        return filter_values(self, self.u)

    def rhobar(self) -> np.ndarray:
        return filter_values(self, self.rho)


@dataclass(frozen=True)
class RunConfig:
    """Time-loop and diagnostics settings"""
    cfl: float = 0.9
    t_end: float = 1.0
    output_every: float = 0.1           # Snapshot cadence in time
    window_half_width: Optional[float] = None   # Default 5 alpha + 5 dx
    window_speed: Optional[float] = None        # Window center moves as window_speed * t
    front_level: Optional[float] = None         # Track the u = front_level crossing
    alphas: Sequence[float] = ()
    grid_sizes: Sequence[int] = ()
    fit_window: Sequence[float] = (0.5, 1.5)    # Time span of slope fits

    def __post_init__(self):
        if not (0.0 < self.cfl <= 1.0):
            raise PreconditionError(f'cfl must lie in (0, 1], got {self.cfl!r}')
        if self.t_end < 0.0:
            raise PreconditionError(f't_end must be nonnegative, got {self.t_end!r}')
        if self.output_every <= 0.0:
            raise PreconditionError('output cadence must be positive')
        if self.window_half_width is not None and self.window_half_width <= 0.0:
            raise PreconditionError('window half-width must be positive')
        if len(self.alphas) != len(self.grid_sizes):
            raise PreconditionError('alphas and grid_sizes must pair up')


@dataclass(frozen=True)
class Diagnostic:
    """Diagnostics at one output time"""
    t: float
    total_mass: float
    window_mass: float
    front_pos: float


@dataclass
class RunResult:
    """Snapshots and diagnostics of a run"""
    snapshots: List[GridState] = field(default_factory=list)
    diagnostics: List[Diagnostic] = field(default_factory=list)
    dt_last: float = 0.0
    dt_min: float = math.inf

    @property
    def final(self) -> GridState:
        return self.snapshots[-1]

    @property
    def clipped_fraction(self) -> float:
        total = self.final.total_mass()
        return self.final.clipped_mass / total if total > 0.0 else 0.0

    @property
    def audit_passed(self) -> bool:
        return self.clipped_fraction <= CLIPPED_MASS_LIMIT

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(d, name) for d in self.diagnostics])


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    n: int
    vel_err: float
    slope_err: float
    front_speed: float = math.nan


@dataclass(frozen=True)
class SweepTable:
    """alpha-sweep convergence table"""
    rows: List[SweepRow]

    @property
    def velocity_improves(self) -> bool:
        return _improves([r.vel_err for r in self.rows])

    @property
    def slope_improves(self) -> bool:
        return _improves([r.slope_err for r in self.rows])

    def front_speed_spread(self) -> float:
        """Largest minus smallest tracked front speed over the rows"""
        speeds = [r.front_speed for r in self.rows]
        return max(speeds) - min(speeds)


# ============================================================================
# OPERATORS
# ============================================================================

def filter_field(f: SampledField, k: Kernel, a: FilterScale) -> np.ndarray:
    """Filter grid values; Helmholtz Green's kernels go through the banded solve"""
    if k.helmholtz_green:
        return helmholtz_filter(f, FilterScale(a.alpha * k.scale)).values
    return convolve(f, k, a).values


def filter_values(state: GridState, values: np.ndarray) -> np.ndarray:
    """Filter a grid array with the state's kernel and alpha"""
    return filter_field(SampledField(state.grid, values, state.boundary), state.kernel, state.alpha)


def observable_divergence(f: SampledField, v: SampledField, k: Kernel, a: FilterScale) -> np.ndarray:
    """
    odiv(f v) = fbar v_x + vbar f_x with centered differences

    Args:
        f: Transported scalar
        v: Velocity on the same grid
        k: Kernel
        a: Filter scale

    Returns:
        np.ndarray: Observable divergence at every node
    """
    if not np.array_equal(f.grid, v.grid) or f.boundary is not v.boundary:
        raise PreconditionError('observable_divergence needs both fields on one grid')
    return (
        filter_field(f, k, a) * _centered(v.values, f.dx, f.boundary)
        + filter_field(v, k, a) * _centered(f.values, f.dx, f.boundary)
    )


# ============================================================================
# TIME STEPPING
# ============================================================================

def step(state: GridState, cfl: float, dt_max: Optional[float] = None) -> GridState:
    """
    Advance one upwind step

    u is upwinded against sign(ubar) and advected with the face average of
    ubar on the upwind side, so a jump in u moves at the mean of the speeds
    on either side of it. rho uses upwind ubar rho_x plus the source
    rhobar u_x differenced on the opposite side. A centered rhobar u_x
    would leave a residual in the discrete total mass; with the adjoint
    side, rhobar D+u + ubar D-rho sums to zero on a periodic grid because
    the filter is symmetric and commutes with D+, so mass is conserved
    wherever ubar keeps one sign.

    Args:
        state: Current state
        cfl: Courant number in (0, 1]
        dt_max: Optional cap on the step (used to land on output times)

    Returns:
        GridState: Advanced state
    """
    ubar = state.ubar()
    rhobar = state.rhobar()
    dx = state.dx

    dt = cfl * dx / max(float(np.max(np.abs(ubar))), SPEED_FLOOR)
    if dt_max is not None:
        dt = min(dt, dt_max)

    backward_u, forward_u = _one_sided(state.u, dx, state.boundary)
    backward_rho, forward_rho = _one_sided(state.rho, dx, state.boundary)
    rightward = ubar > 0.0

    left_face, right_face = _face_speeds(ubar, state.boundary)
    u_advection = np.where(rightward, np.maximum(left_face, 0.0) * backward_u, np.minimum(right_face, 0.0) * forward_u)
    u_x_adjoint = np.where(rightward, forward_u, backward_u)
    rho_x_upwind = np.where(rightward, backward_rho, forward_rho)

    u_new = state.u - dt * u_advection
    rho_new = state.rho - dt * (ubar * rho_x_upwind + rhobar * u_x_adjoint)

    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(rho_new))):
        raise InstabilityError(
            f'non-finite values at t={state.time + dt:.6g} (step {state.steps + 1}, dt={dt:.3e})',
            {'time': state.time + dt, 'step': state.steps + 1, 'dt': dt},
        )

    negative = rho_new < 0.0
    clipped = float(-np.sum(rho_new[negative]) * dx) if np.any(negative) else 0.0
    if clipped > 0.0:
        rho_new = np.where(negative, 0.0, rho_new)

    return replace(
        state,
        rho=rho_new,
        u=u_new,
        time=state.time + dt,
        clipped_mass=state.clipped_mass + clipped,
        steps=state.steps + 1,
    )


def run(initial: GridState, cfg: RunConfig) -> RunResult:
    """
    Step until t_end, recording snapshots and diagnostics at the output cadence

    Args:
        initial: Initial state
        cfg: Run configuration

    Returns:
        RunResult: Snapshots (initial included) and diagnostics
    """
    result = RunResult()
    _record(result, initial, cfg)
    if cfg.t_end <= 0.0:
        return result

    logger.info(f'Eulerian run: N={initial.grid.size}, alpha={initial.alpha.alpha:g}, t_end={cfg.t_end:g}')
    state = initial
    next_output = min(cfg.output_every, cfg.t_end)
    while state.time < cfg.t_end - 1e-14:
        before = state.time
        state = step(state, cfg.cfl, dt_max=next_output - state.time)
        dt = state.time - before
        result.dt_last = dt
        result.dt_min = min(result.dt_min, dt)
        if state.time >= next_output - 1e-14:
            state = replace(state, time=next_output)
            _record(result, state, cfg)
            next_output = min(next_output + cfg.output_every, cfg.t_end)

    if not result.audit_passed:
        logger.warning(f'Clipped negative density {result.clipped_fraction:.3e} of total mass exceeds {CLIPPED_MASS_LIMIT:g}')
    logger.info(f'Eulerian run finished in {state.steps} steps')
    return result


# ============================================================================
# DIAGNOSTICS
# ============================================================================

def mass_in_window(state: GridState, center: float, half_width: float) -> float:
    """
    Trapezoidal mass of rho over [center - half_width, center + half_width]

    Args:
        state: Grid state
        center: Window center
        half_width: Window half-width

    Returns:
        float: Windowed mass
    """
    lo, hi = center - half_width, center + half_width
    if half_width <= 0.0 or lo < state.grid[0] or hi > state.grid[-1]:
        raise DomainError(
            f'window [{lo:.4g}, {hi:.4g}] is outside the grid [{state.grid[0]:.4g}, {state.grid[-1]:.4g}]',
            {'center': center, 'half_width': half_width},
        )
    inside = (state.grid > lo) & (state.grid < hi)
    xs = np.concatenate([[lo], state.grid[inside], [hi]])
    values = np.interp(xs, state.grid, state.rho)
    return float(integrate.trapezoid(values, xs))


def front_position(state: GridState, level: float) -> float:
    """First crossing of u = level from the left, linearly interpolated (nan if none)"""
    shifted = state.u - level
    crossings = np.flatnonzero((shifted[:-1] * shifted[1:] <= 0.0) & (shifted[:-1] != shifted[1:]))
    if crossings.size == 0:
        return math.nan
    i = int(crossings[0])
    fraction = shifted[i] / (shifted[i] - shifted[i + 1])
    return float(state.grid[i] + fraction * state.dx)


def observable_balance(state: GridState) -> float:
    """
    Net observable divergence of rho by u over a periodic grid

    The sum of rhobar u_x + ubar rho_x vanishes for a symmetric filter that
    commutes with differentiation; the value is relative to 1 + sum |odiv| dx.

    Args:
        state: Periodic grid state

    Returns:
        float: |sum odiv dx| / (1 + sum |odiv| dx)
    """
    if state.boundary is not Boundary.PERIODIC:
        raise PreconditionError('observable balance needs a periodic grid')
    rho = SampledField(state.grid, state.rho, state.boundary)
    u = SampledField(state.grid, state.u, state.boundary)
    odiv = observable_divergence(rho, u, state.kernel, state.alpha)
    return float(abs(np.sum(odiv)) * state.dx / (1.0 + np.sum(np.abs(odiv)) * state.dx))


def linear_slope(ts: Sequence[float], ys: Sequence[float]) -> float:
    """Least-squares slope"""
    ts = np.asarray(ts, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if ts.size < 2:
        raise PreconditionError('a slope needs at least two points')
    return float(np.polyfit(ts, ys, 1)[0])


def window_half_width(state: GridState, cfg: RunConfig) -> float:
    if cfg.window_half_width is not None:
        return cfg.window_half_width
    return WINDOW_ALPHAS * state.alpha.alpha + WINDOW_CELLS * state.dx


def fitted_rates(result: RunResult, cfg: RunConfig) -> dict:
    """Front speed and window-mass slope over the fit window"""
    t0, t1 = cfg.fit_window
    ts = result.series('t')
    chosen = (ts >= t0 - 1e-12) & (ts <= t1 + 1e-12)
    rates = {'front_speed': math.nan, 'mass_slope': math.nan}
    if np.count_nonzero(chosen) < 2:
        return rates
    fronts = result.series('front_pos')[chosen]
    masses = result.series('window_mass')[chosen]
    if np.all(np.isfinite(fronts)):
        rates['front_speed'] = linear_slope(ts[chosen], fronts)
    if np.all(np.isfinite(masses)):
        rates['mass_slope'] = linear_slope(ts[chosen], masses)
    return rates


# ============================================================================
# BUILDERS
# ============================================================================

def riemann_state(
    d: RiemannData,
    k: Kernel,
    a: FilterScale,
    x_lo: float,
    x_hi: float,
    n: int,
) -> GridState:
    """
    Riemann data on a cell-centered grid; the jump at x = 0 falls on a cell face when x_lo/dx is an integer

    Args:
        d: Riemann data
        k: Kernel
        a: Filter scale
        x_lo: Left end
        x_hi: Right end
        n: Number of cells

    Returns:
        GridState: Constant-extension state at t = 0
    """
    dx = (x_hi - x_lo) / n
    check_resolution(dx, a, 'riemann_state')
    grid = x_lo + (np.arange(n) + 0.5) * dx
    rho = np.where(grid < 0.0, d.rho_l, d.rho_r)
    u = np.where(grid < 0.0, d.u_l, d.u_r)
    return GridState(grid, rho.astype(float), u.astype(float), a, k)


def smooth_state(
    x_lo: float,
    x_hi: float,
    n: int,
    rho_fn: Callable[[np.ndarray], np.ndarray],
    u_fn: Callable[[np.ndarray], np.ndarray],
    k: Kernel,
    a: FilterScale,
    boundary: Boundary = Boundary.CONSTANT,
) -> GridState:
    """Sample smooth initial data; periodic grids exclude the right endpoint"""
    grid = np.linspace(x_lo, x_hi, n, endpoint=boundary is not Boundary.PERIODIC)
    check_resolution(grid[1] - grid[0], a, 'smooth_state')
    ones = np.ones_like(grid)
    return GridState(grid, np.asarray(rho_fn(grid), dtype=float) * ones, np.asarray(u_fn(grid), dtype=float) * ones,
                     a, k, boundary=boundary)


def alpha_sweep(cfg: RunConfig, d: RiemannData, k: Kernel, x_range=(-1.0, 3.0)) -> SweepTable:
    """
    Riemann runs over decreasing alpha with matching grids

    Each row reports the sup-distance between the computed ubar and the
    closed-form filtered velocity at t_end, and the relative error of the
    window-mass slope against [rho u] - sigma [rho].

    Args:
        cfg: Run configuration with alphas and grid_sizes
        d: Delta-shock data
        k: Kernel
        x_range: Computational interval

    Returns:
        SweepTable: One row per alpha
    """
    if not cfg.alphas:
        raise PreconditionError('alpha sweep needs at least one alpha')
    if any(b >= a for a, b in zip(cfg.alphas, cfg.alphas[1:])):
        raise PreconditionError('alphas must be strictly decreasing')

    solution = classify(d)
    target_slope = spatial_delta_mass(d, 1.0)
    rows = []
    for alpha, n in zip(cfg.alphas, cfg.grid_sizes):
        a = FilterScale(alpha)
        initial = riemann_state(d, k, a, x_range[0], x_range[1], n)
        run_cfg = replace(cfg, window_speed=solution.sigma, front_level=solution.sigma)
        result = run(initial, run_cfg)
        final = result.final

        exact = filtered_velocity(d, k, a, final.grid, final.time)
        computed = convolve(SampledField(final.grid, final.u, Boundary.CONSTANT), k, a).values
        vel_err = float(np.max(np.abs(computed - exact)))
        rates = fitted_rates(result, run_cfg)
        slope_err = abs(rates['mass_slope'] - target_slope) / abs(target_slope)
        rows.append(SweepRow(alpha, n, vel_err, slope_err, rates['front_speed']))
        logger.info(f'Sweep alpha={alpha:g} N={n}: vel_err={vel_err:.3e}, slope_err={slope_err:.3e}')
    return SweepTable(rows)


# ============================================================================
# UTILITY FUNCTIONS
# ============================================================================

def _one_sided(values: np.ndarray, dx: float, boundary: Boundary):
    """Backward and forward differences; constant extension makes both vanish at the outer faces"""
    if boundary is Boundary.PERIODIC:
        backward = (values - np.roll(values, 1)) / dx
        forward = (np.roll(values, -1) - values) / dx
        return backward, forward
    diff = np.diff(values) / dx
    backward = np.concatenate([[0.0], diff])
    forward = np.concatenate([diff, [0.0]])
    return backward, forward


def _face_speeds(ubar: np.ndarray, boundary: Boundary):
    """ubar averaged onto the left and right face of every cell"""
    if boundary is Boundary.PERIODIC:
        left, right = np.roll(ubar, 1), np.roll(ubar, -1)
    else:
        left = np.concatenate([ubar[:1], ubar[:-1]])
        right = np.concatenate([ubar[1:], ubar[-1:]])
    return 0.5 * (ubar + left), 0.5 * (ubar + right)


def _centered(values: np.ndarray, dx: float, boundary: Boundary) -> np.ndarray:
    backward, forward = _one_sided(values, dx, boundary)
    return 0.5 * (backward + forward)


def _record(result: RunResult, state: GridState, cfg: RunConfig) -> None:
    window = math.nan
    if cfg.window_speed is not None:
        try:
            window = mass_in_window(state, cfg.window_speed * state.time, window_half_width(state, cfg))
        except DomainError:
            window = math.nan
    front = front_position(state, cfg.front_level) if cfg.front_level is not None else math.nan
    result.snapshots.append(state)
    result.diagnostics.append(Diagnostic(state.time, state.total_mass(), window, front))


def _improves(errors: List[float]) -> bool:
    return all(b <= (1.0 + SWEEP_NOISE) * a or b <= SWEEP_FLOOR for a, b in zip(errors, errors[1:]))
