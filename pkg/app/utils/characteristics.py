"""
Observable Transport Lab Characteristics
Particle map under the filtered velocity, map inversion, and unfiltered blow-up oracles
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import optimize

from app.errors import BlowupError, CrossingError, ExtrapolationError, PreconditionError
from app.utils.kernels import FilterScale, Kernel, convolve_points


logger = logging.getLogger(__name__)

Profile = Callable[[np.ndarray], np.ndarray]


# ============================================================================
# ENUMS & CONSTANTS
# ============================================================================

MIN_PARTICLES = 64
STABILITY_FRACTION = 0.25               # dt <= STABILITY_FRACTION * alpha / max|u0|
DERIVATIVE_STEP = 1e-5                  # Central-difference step
DERIVATIVE_TOLERANCE = 1e-6
DERIVATIVE_CHECK_POINTS = 17
BLOWUP_SAMPLES = 4096
CLUSTER_TOLERANCE = 1e-12               # Positions closer than this count as one cluster
NARROW_SEGMENT = 1e-4                   # Segment width in units of alpha below which the cdf limit is used


# ============================================================================
# DATA CLASSES
# ============================================================================

@dataclass(frozen=True)
class SmoothIC:
    """Smooth initial data (rho0, u0) on a bounded interval"""
    u0: Profile
    rho0: Profile
    domain: Tuple[float, float]
    du0: Optional[Profile] = None       # Analytic u0', central differences otherwise
    drho0: Optional[Profile] = None
    name: str = 'custom'

    def __post_init__(self):
        lo, hi = self.domain
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise PreconditionError(f'initial-condition domain {self.domain} is invalid')

        s = np.linspace(lo, hi, DERIVATIVE_CHECK_POINTS)
        for label, fn in (('u0', self.u0), ('rho0', self.rho0)):
            if not np.all(np.isfinite(_vector(fn, s))):
                raise PreconditionError(f'{label} is not finite on {self.domain}')
        for label, fn, slope in (('u0', self.u0, self.du0), ('rho0', self.rho0, self.drho0)):
            if slope is None:
                continue
            analytic = _vector(slope, s)
            numeric = _central_difference(fn, s)
            if np.max(np.abs(analytic - numeric)) > DERIVATIVE_TOLERANCE * max(1.0, np.max(np.abs(numeric))):
                raise PreconditionError(f'{label} derivative disagrees with central differences')

    def u0_values(self, s) -> np.ndarray:
        return _vector(self.u0, s)

    def rho0_values(self, s) -> np.ndarray:
        return _vector(self.rho0, s)

    def u0_prime(self, s) -> np.ndarray:
        if self.du0 is not None:
            return _vector(self.du0, s)
        return _central_difference(self.u0, s)

    def rho0_prime(self, s) -> np.ndarray:
        if self.drho0 is not None:
            return _vector(self.drho0, s)
        return _central_difference(self.rho0, s)


@dataclass(frozen=True)
class LagrangianMap:
    """Particle positions phi_t(s_i) at snapshot times, with carried velocities u0(s_i)"""
    seeds: np.ndarray
    times: np.ndarray
    positions: np.ndarray               # (snapshots, particles)
    velocities: np.ndarray
    jacobian_estimates: np.ndarray      # d phi_t / ds per snapshot and particle
    ic: SmoothIC
    alpha: float

    @property
    def final_positions(self) -> np.ndarray:
        return self.positions[-1]

    def snapshot_index(self, t: float) -> int:
        hits = np.flatnonzero(np.abs(self.times - t) <= 1e-12 * max(1.0, abs(t)))
        if hits.size == 0:
            raise PreconditionError(f't={t!r} is not a stored snapshot time')
        return int(hits[0])

    def positions_at(self, t: float) -> np.ndarray:
        return self.positions[self.snapshot_index(t)]

    def min_gap(self) -> float:
        """Smallest distance between neighboring particles over all snapshots"""
        return float(np.min(np.diff(self.positions, axis=1)))

    def min_jacobian(self) -> float:
        return float(np.min(self.jacobian_estimates))

    def velocity_drift(self) -> float:
        """Largest change of a carried velocity (zero: velocities are never recomputed)"""
        return float(np.max(np.abs(self.velocities - self.ic.u0_values(self.seeds))))


# ============================================================================
# FILTERED VELOCITY AT PARTICLES
# ============================================================================

def particle_filtered_velocity(positions: np.ndarray, velocities: np.ndarray, k: Kernel, a: FilterScale) -> np.ndarray:
    """
    Filter the piecewise-linear interpolant of particle velocities, evaluated at the particles

    The interpolant is extended by constants beyond the outer particles.
    Each linear segment is integrated against g_alpha in closed form via
    the kernel's integrated cdf, so the result depends smoothly on the
    positions. Kernels without that ramp fall back to grid resampling.

    Args:
        positions: Strictly increasing particle positions
        velocities: Carried velocities
        k: Base kernel
        a: Filter scale

    Returns:
        np.ndarray: ubar at each particle
    """
    if k.ramp is None:
        return convolve_points(positions, velocities, k, a)

    offsets = (positions[:, None] - positions[None, :]) / a.alpha
    widths = np.diff(positions) / a.alpha
    ramp = k.ramp(offsets)
    segment = (ramp[:, :-1] - ramp[:, 1:]) / widths[None, :]

    # Narrow segments: the ramp secant is replaced by its limit, the cdf at the midpoint
    narrow = widths < NARROW_SEGMENT
    if np.any(narrow):
        segment[:, narrow] = k.cdf(0.5 * (offsets[:, :-1] + offsets[:, 1:])[:, narrow])
    return velocities[0] + segment @ np.diff(velocities)


# ============================================================================
# CHARACTERISTICS ENGINE
# ============================================================================

def advect(
    ic: SmoothIC,
    k: Kernel,
    a: FilterScale,
    t_end: float,
    dt: float,
    n_particles: int,
    snapshot_every: int = 1,
) -> LagrangianMap:
    """
    Move particles with the filtered velocity using classical RK4

    Each particle carries u0(s) unchanged; only its position evolves,
    d/dt phi_t(s) = ubar(phi_t(s), t).

    Args:
        ic: Initial data
        k: Base kernel
        a: Filter scale
        t_end: Final time
        dt: Largest allowed step (the step actually used divides t_end evenly)
        n_particles: Number of particles seeded uniformly on the IC domain
        snapshot_every: Store every n-th step

    Returns:
        LagrangianMap: Snapshots including t = 0 and t = t_end
    """
    if n_particles < MIN_PARTICLES:
        raise PreconditionError(f'advect needs at least {MIN_PARTICLES} particles, got {n_particles}')
    if not (t_end > 0.0 and dt > 0.0):
        raise PreconditionError('advect needs positive t_end and dt')

    seeds = np.linspace(ic.domain[0], ic.domain[1], n_particles)
    velocities = ic.u0_values(seeds)
    peak = float(np.max(np.abs(velocities)))
    if peak > 0.0:
        bound = STABILITY_FRACTION * a.alpha / peak
        if dt > bound * (1.0 + 1e-12):
            raise PreconditionError(
                f'dt={dt:.4g} exceeds alpha/(4 max|u0|)={bound:.4g}',
                {'dt': dt, 'bound': bound},
            )

    steps = max(int(math.ceil(t_end / dt - 1e-9)), 1)
    h = t_end / steps
    logger.info(f'Advecting {n_particles} particles: alpha={a.alpha:g}, t_end={t_end:g}, {steps} steps of {h:.4g}')

    def rate(x: np.ndarray, t: float) -> np.ndarray:
        gaps = np.diff(x)
        if np.any(gaps <= 0.0):
            raise CrossingError(t, int(np.argmax(gaps <= 0.0)))
        return particle_filtered_velocity(x, velocities, k, a)

    x = seeds.copy()
    times, snapshots = [0.0], [x.copy()]
    for n in range(steps):
        t = n * h
        k1 = rate(x, t)
        k2 = rate(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = rate(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = rate(x + h * k3, t + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        gaps = np.diff(x)
        if np.any(gaps <= 0.0):
            raise CrossingError(t + h, int(np.argmax(gaps <= 0.0)))
        if (n + 1) % snapshot_every == 0 or n + 1 == steps:
            times.append((n + 1) * h if n + 1 < steps else t_end)
            snapshots.append(x.copy())

    positions = np.vstack(snapshots)
    jacobian = np.gradient(positions, seeds, axis=1)
    result = LagrangianMap(seeds, np.asarray(times), positions, velocities, jacobian, ic, a.alpha)
    logger.debug(f'Advection done: min gap {result.min_gap():.3e}, min jacobian {result.min_jacobian():.3e}')
    return result


def invert_map(m: LagrangianMap, x: float, t: float) -> float:
    """
    Seed s with phi_t(s) = x

    Bisection on the monotone snapshot followed by linear interpolation;
    inside a flat cluster the left-most seed is returned.

    Args:
        m: Lagrangian map
        x: Position inside the particle hull
        t: Snapshot time

    Returns:
        float: Seed s
    """
    positions = m.positions_at(t)
    if x < positions[0] or x > positions[-1]:
        raise ExtrapolationError(
            f'x={x!r} is outside the particle hull [{positions[0]:.6g}, {positions[-1]:.6g}] at t={t:g}',
            {'x': x, 't': t},
        )

    j = int(np.searchsorted(positions, x, side='right')) - 1
    j = min(max(j, 0), positions.size - 2)
    gap = positions[j + 1] - positions[j]
    if gap <= CLUSTER_TOLERANCE:
        while j > 0 and positions[j] - positions[j - 1] <= CLUSTER_TOLERANCE:
            j -= 1
        return float(m.seeds[j])

    fraction = (x - positions[j]) / gap
    return float(m.seeds[j] + fraction * (m.seeds[j + 1] - m.seeds[j]))


def map_position(m: LagrangianMap, s: float, t: float) -> float:
    """phi_t(s) by linear interpolation between seeds"""
    return float(np.interp(s, m.seeds, m.positions_at(t)))


def velocity_at(m: LagrangianMap, x: float, t: float) -> float:
    """u(x, t) = u0(phi_t^-1(x))"""
    return float(m.ic.u0_values(invert_map(m, x, t)))


# ============================================================================
# UNFILTERED ORACLES
# ============================================================================

def blowup_time(ic: SmoothIC) -> float:
    """
    Earliest blow-up time -1/u0'(s) of the unfiltered system

    Args:
        ic: Initial data

    Returns:
        float: Blow-up time, or inf when u0 is nowhere decreasing
    """
    lo, hi = ic.domain
    s = np.linspace(lo, hi, BLOWUP_SAMPLES)
    slopes = ic.u0_prime(s)
    i = int(np.argmin(slopes))
    steepest = float(slopes[i])
    if steepest >= 0.0:
        return math.inf

    left, right = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
    refined = optimize.minimize_scalar(
        lambda v: float(ic.u0_prime(v)),
        bounds=(left, right),
        method='bounded',
        options={'xatol': 1e-12},
    )
    if refined.success and refined.fun < steepest:
        steepest = float(refined.fun)
    return -1.0 / steepest


def density_on_characteristic(ic: SmoothIC, s: float, t: float) -> float:
    """
    Unfiltered density rho0(s) / (1 + u0'(s) t) along the characteristic from s

    Args:
        ic: Initial data
        s: Foot of the characteristic
        t: Time before the characteristic's blow-up

    Returns:
        float: Density
    """
    return float(ic.rho0_values(s)) / _compression(ic, s, t)


def gradient_on_characteristic(ic: SmoothIC, s: float, t: float) -> float:
    """Unfiltered velocity gradient u0'(s) / (1 + u0'(s) t)"""
    return float(ic.u0_prime(s)) / _compression(ic, s, t)


def traced_density(ic: SmoothIC, s: float, t: float, h: float = DERIVATIVE_STEP) -> float:
    """
    Unfiltered density from the numerically differentiated map s -> s + u0(s) t

    Args:
        ic: Initial data
        s: Foot of the characteristic
        t: Time
        h: Central-difference step in s

    Returns:
        float: rho0(s) / (d x / d s)
    """
    right = unfiltered_positions(ic, s + h, t)
    left = unfiltered_positions(ic, s - h, t)
    stretch = float(right - left) / (2.0 * h)
    if stretch <= 0.0:
        raise BlowupError(f'characteristics have crossed at s={s:g}, t={t:g}', {'s': s, 't': t})
    return float(ic.rho0_values(s)) / stretch


def unfiltered_positions(ic: SmoothIC, seeds, t: float) -> np.ndarray:
    """Straight characteristics x = s + u0(s) t"""
    seeds = np.asarray(seeds, dtype=float)
    return seeds + ic.u0_values(seeds) * t


def unfiltered_crossing_time(ic: SmoothIC, seeds: np.ndarray) -> float:
    """First time two neighboring unfiltered characteristics meet (inf if never)"""
    seeds = np.asarray(seeds, dtype=float)
    closing = np.diff(ic.u0_values(seeds))
    gaps = np.diff(seeds)
    converging = closing < 0.0
    if not np.any(converging):
        return math.inf
    return float(np.min(-gaps[converging] / closing[converging]))


# ============================================================================
# UTILITY FUNCTIONS
# ============================================================================

def _vector(fn: Profile, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return np.asarray(fn(s), dtype=float) * np.ones_like(s)


def _central_difference(fn: Profile, s, h: float = DERIVATIVE_STEP) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return (_vector(fn, s + h) - _vector(fn, s - h)) / (2.0 * h)


def _compression(ic: SmoothIC, s: float, t: float) -> float:
    factor = 1.0 + float(ic.u0_prime(s)) * t
    if factor <= 0.0:
        raise BlowupError(
            f'characteristic from s={s:g} has blown up by t={t:g} (1 + u0\'(s) t = {factor:.3g})',
            {'s': s, 't': t},
        )
    return factor
