"""
Observable Transport Lab Quadrature
Gauss-Legendre panel rules on rectangles, graded around a moving jump and the rectangle edges
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.errors import PrecisionError


logger = logging.getLogger(__name__)

Integrand = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ============================================================================
# ENUMS & CONSTANTS
# ============================================================================

GAUSS_ORDER = 20

# Extra breaks at these multiples of the layer width on both sides of a jump
LAYER_MULTIPLES = (0.5, 1.0, 2.0, 4.0, 8.0)

# Extra breaks at these fractions of the half-width inward from each edge
EDGE_FRACTIONS = (0.5, 0.25, 0.125, 0.0625, 0.03125)

# Longest panel, as a fraction of the half-width
MAX_PANEL_FRACTION = 0.25

MAX_REFINEMENT_LEVEL = 2


# ============================================================================
# DATA CLASSES
# ============================================================================

@dataclass(frozen=True)
class PanelRule2D:
    """Flattened tensor-panel rule: nodes (xs, ts) with weights ws"""
    xs: np.ndarray
    ts: np.ndarray
    ws: np.ndarray

    @property
    def size(self) -> int:
        return int(self.ws.size)

    def integrate(self, fn: Integrand) -> float:
        return float(np.sum(self.ws * fn(self.xs, self.ts)))


@dataclass(frozen=True)
class QuadratureResult:
    """Integrals of several integrands on a shared rule"""
    values: Tuple[float, ...]
    errors: Tuple[float, ...]           # Difference against the previous refinement level
    level: int
    nodes: int

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0


# ============================================================================
# RULE CONSTRUCTION
# ============================================================================

@lru_cache(maxsize=8)
def gauss_legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [-1, 1]"""
    return np.polynomial.legendre.leggauss(order)


def graded_breaks(
    lo: float,
    hi: float,
    anchors: Sequence[float] = (),
    layer: Optional[float] = None,
) -> np.ndarray:
    """
    Panel breaks on [lo, hi]

    Breaks are placed at each anchor inside the interval, at layer
    multiples around it, and geometrically toward both edges; panels
    wider than a quarter of the half-width are split evenly.

    Args:
        lo: Left end
        hi: Right end
        anchors: Jump locations (kept as panel breaks)
        layer: Boundary-layer width around each anchor

    Returns:
        np.ndarray: Sorted breaks including lo and hi
    """
    half = 0.5 * (hi - lo)
    points: List[float] = [lo, hi]
    points.extend(lo + f * half for f in EDGE_FRACTIONS)
    points.extend(hi - f * half for f in EDGE_FRACTIONS)

    for anchor in anchors:
        candidates = [anchor]
        if layer:
            candidates.extend(anchor + sign * m * layer for m in LAYER_MULTIPLES for sign in (-1.0, 1.0))
        points.extend(p for p in candidates if lo < p < hi)

    breaks = np.unique(np.asarray(points, dtype=float))

    max_width = MAX_PANEL_FRACTION * half
    pieces = [breaks[:1]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(int(math.ceil((b - a) / max_width - 1e-12)), 1)
        pieces.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(pieces)


def refine_breaks(breaks: np.ndarray, level: int) -> np.ndarray:
    """Split every panel into 2**level equal panels"""
    if level <= 0:
        return breaks
    parts = 2 ** level
    fractions = np.arange(parts) / parts
    inner = breaks[:-1, None] + np.diff(breaks)[:, None] * fractions[None, :]
    return np.append(inner.ravel(), breaks[-1])


def panel_nodes(breaks: np.ndarray, order: int = GAUSS_ORDER) -> Tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights over the given panels"""
    x, w = gauss_legendre(order)
    half = 0.5 * np.diff(breaks)[:, None]
    mid = 0.5 * (breaks[:-1] + breaks[1:])[:, None]
    return (mid + half * x[None, :]).ravel(), (half * w[None, :]).ravel()


def rectangle_rule(
    x_range: Tuple[float, float],
    t_range: Tuple[float, float],
    jump_speed: Optional[float] = None,
    jump_offset: float = 0.0,
    layer: Optional[float] = None,
    level: int = 0,
    order: int = GAUSS_ORDER,
) -> PanelRule2D:
    """
    Tensor panel rule on a rectangle with an optional jump along x = speed*t + offset

    The inner x panels are rebuilt at every outer t node so the jump is
    always a panel break.

    Args:
        x_range: (x_lo, x_hi)
        t_range: (t_lo, t_hi)
        jump_speed: Speed of the jump locus (None when the integrand is smooth)
        jump_offset: Position of the locus at t = 0
        layer: Width of boundary layers around the jump
        level: Refinement level (panels split 2**level times per direction)
        order: Gauss-Legendre order per panel

    Returns:
        PanelRule2D: Flattened rule
    """
    x_lo, x_hi = x_range
    t_lo, t_hi = t_range

    t_anchors: List[float] = []
    t_layer = None
    if jump_speed:
        t_anchors = [(x_lo - jump_offset) / jump_speed, (x_hi - jump_offset) / jump_speed]
        if layer:
            t_layer = layer / abs(jump_speed)

    t_nodes, t_weights = panel_nodes(refine_breaks(graded_breaks(t_lo, t_hi, t_anchors, t_layer), level), order)

    xs, ts, ws = [], [], []
    for t, wt in zip(t_nodes, t_weights):
        anchors = () if jump_speed is None else (jump_speed * t + jump_offset,)
        x_nodes, x_weights = panel_nodes(refine_breaks(graded_breaks(x_lo, x_hi, anchors, layer), level), order)
        xs.append(x_nodes)
        ts.append(np.full_like(x_nodes, t))
        ws.append(x_weights * wt)

    return PanelRule2D(np.concatenate(xs), np.concatenate(ts), np.concatenate(ws))


# ============================================================================
# ADAPTIVE DRIVER
# ============================================================================

def adaptive_integrate(
    integrands: Sequence[Integrand],
    build_rule: Callable[[int], PanelRule2D],
    tol: float,
    max_level: int = MAX_REFINEMENT_LEVEL,
) -> QuadratureResult:
    """
    Integrate several integrands on a shared rule, refining until successive levels agree

    Args:
        integrands: Vectorized integrands f(x, t)
        build_rule: Rule factory by refinement level
        tol: Absolute tolerance per integral
        max_level: Deepest refinement level tried

    Returns:
        QuadratureResult: Values at the finest level used
    """
    rule = build_rule(0)
    previous = [rule.integrate(f) for f in integrands]
    errors = [math.inf] * len(integrands)

    for level in range(1, max_level + 1):
        rule = build_rule(level)
        current = [rule.integrate(f) for f in integrands]
        errors = [abs(c - p) for c, p in zip(current, previous)]
        logger.debug(f'Panel quadrature level {level}: {rule.size} nodes, max change {max(errors):.3e}')
        if max(errors) <= tol:
            return QuadratureResult(tuple(current), tuple(errors), level, rule.size)
        previous = current

    raise PrecisionError(
        f'Panel quadrature did not reach tolerance {tol:.1e} (achieved {max(errors):.3e})',
        achieved=max(errors),
        requested=tol,
    )
