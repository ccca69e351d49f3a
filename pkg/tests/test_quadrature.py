"""
Panel quadrature
"""

import numpy as np
import pytest

from app.errors import PrecisionError
from app.utils.quadrature import (
    MAX_PANEL_FRACTION,
    adaptive_integrate,
    graded_breaks,
    panel_nodes,
    rectangle_rule,
    refine_breaks,
)


def test_panel_nodes_integrate_polynomials_exactly():
    nodes, weights = panel_nodes(np.array([0.0, 0.5, 1.0]))
    assert np.sum(weights * nodes ** 5) == pytest.approx(1.0 / 6.0, abs=1e-15)
    assert np.sum(weights) == pytest.approx(1.0, abs=1e-15)


def test_graded_breaks_keep_anchor_and_bound_panels():
    breaks = graded_breaks(-1.0, 3.0, anchors=(0.7,), layer=0.05)
    assert breaks[0] == -1.0 and breaks[-1] == 3.0
    assert np.any(breaks == 0.7)
    assert np.all(np.diff(breaks) > 0.0)
    assert np.max(np.diff(breaks)) <= MAX_PANEL_FRACTION * 2.0 + 1e-12


def test_anchors_outside_the_interval_are_ignored():
    breaks = graded_breaks(0.0, 1.0, anchors=(5.0,))
    assert breaks[-1] == 1.0
    assert np.all(breaks <= 1.0)


def test_refinement_splits_every_panel():
    breaks = np.array([0.0, 1.0, 3.0])
    refined = refine_breaks(breaks, 2)
    np.testing.assert_allclose(refined, [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0])
    assert refine_breaks(breaks, 0) is breaks


def test_rectangle_rule_resolves_a_moving_jump():
    """Indicator of x < t over [-1, 3] x [0.5, 1.5] has area 2"""
    rule = rectangle_rule((-1.0, 3.0), (0.5, 1.5), jump_speed=1.0, layer=0.1)
    assert rule.integrate(lambda x, t: np.where(x < t, 1.0, 0.0)) == pytest.approx(2.0, abs=1e-12)


def test_adaptive_integrate_shares_the_rule():
    result = adaptive_integrate(
        [lambda x, t: x * t, lambda x, t: np.cos(x) * np.ones_like(t)],
        lambda level: rectangle_rule((0.0, 1.0), (0.0, 2.0), level=level),
        1e-12,
    )
    assert result.values[0] == pytest.approx(1.0, abs=1e-13)
    assert result.values[1] == pytest.approx(2.0 * np.sin(1.0), abs=1e-13)
    assert result.level == 1
    assert result.max_error <= 1e-12


def test_unresolved_jump_raises_precision_error():
    with pytest.raises(PrecisionError) as info:
        adaptive_integrate(
            [lambda x, t: np.where(x < 0.3, 1.0, 0.0)],
            lambda level: rectangle_rule((0.0, 1.0), (0.0, 1.0), level=level),
            1e-12,
        )
    assert info.value.requested == 1e-12
    assert info.value.achieved > 1e-12
