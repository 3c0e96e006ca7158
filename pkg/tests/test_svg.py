import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from p300prm.errors import RejectedInput
from p300prm.svg import NEG, POS, bar_svg, diverging_color, heatmap_svg, render_heatmap_svg

MIDPOINT = "#ffffff"


def cell_colors(svg):
    return re.findall(r'<rect x="\d+" y="\d+" width="14" height="14" fill="(#[0-9a-f]{6})"/>', svg)


def test_zero_matrix_is_midpoint():
    colors = cell_colors(heatmap_svg(np.zeros((2, 2)), ["a", "b"], [1, 2], signed=True))
    assert colors == [MIDPOINT] * 4


def _hex(c):
    return np.array([int(c[i : i + 2], 16) for i in (1, 3, 5)], dtype=float)


def _position(color, end):
    """Fraction of the way from white to ``end`` implied by a rendered color."""
    white = np.full(3, 255.0)
    span = white - np.array(end, dtype=float)
    return float(((white - _hex(color)) @ span) / (span @ span))


@settings(max_examples=60, deadline=None)
@given(st.floats(-10, 10, allow_nan=False), st.floats(0.1, 10))
def test_diverging_symmetry(v, vmax):
    pos, neg = diverging_color(abs(v), vmax), diverging_color(-abs(v), vmax)
    if v == 0:
        assert pos == neg == MIDPOINT
        return
    t = min(abs(v) / vmax, 1.0)
    # both sides sit the same fraction of the way out from the midpoint
    assert _position(pos, POS) == pytest.approx(t, abs=0.01)
    assert _position(neg, NEG) == pytest.approx(t, abs=0.01)


def test_negation_mirrors_cells():
    m = np.array([[1.0, -0.5], [0.0, 0.25]])
    pos = cell_colors(heatmap_svg(m, ["a", "b"], [1, 2]))
    neg = cell_colors(heatmap_svg(-m, ["a", "b"], [1, 2]))
    for v, p, n in zip(m.ravel(), pos, neg):
        assert p == diverging_color(v, 1.0) and n == diverging_color(-v, 1.0)
        if v:
            assert _position(p, POS if v > 0 else NEG) == pytest.approx(_position(n, NEG if v > 0 else POS), abs=0.01)
    assert pos[2] == neg[2] == MIDPOINT


def test_deterministic_bytes(tmp_path):
    m = np.random.default_rng(0).normal(size=(3, 4))
    a = render_heatmap_svg(m, list("abc"), [1, 2, 3, 4], True, tmp_path / "a.svg").read_bytes()
    b = render_heatmap_svg(m, list("abc"), [1, 2, 3, 4], True, tmp_path / "b.svg").read_bytes()
    assert a == b


def test_rejects_non_finite():
    with pytest.raises(RejectedInput):
        heatmap_svg(np.array([[np.nan]]), ["a"], [1])
    with pytest.raises(RejectedInput):
        bar_svg([1.0, np.inf], ["a", "b"])


def test_bar_chart_has_one_bar_per_value():
    svg = bar_svg([0.5, 1.0, 0.0], ["Pz", "Cz", "Oz"], title="relevance")
    assert svg.count('width="12"') == 3
    assert "relevance" in svg
