import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlperim import fractal as F
from nlperim import geometry as G
from nlperim.errors import EmptyBoundary, InsufficientRows

SQUARE = G.Polygon(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)))


@given(st.integers(1, 200), st.floats(0, 1))
def test_unit_segment_counts(m, shift):
    seg = (np.array([[shift, 0.3]]), np.array([[shift + 1.0, 0.3]]))
    (row,) = F.box_count(seg, [1.0 / m], corner=(0.0, 0.0)).rows
    assert row[1] in (m, m + 1)


def test_unit_square_boundary_half_boxes():
    assert F.box_count(SQUARE, [0.5]).rows == [(0.5, 8)]


def test_grid_boundary_matches_polygon():
    g = G.rasterize(G.Box(0, 0, 1, 1), (-0.25, -0.25, 1.25, 1.25), 0.125)
    deltas = [0.5, 0.25, 0.125]
    assert F.box_count(g, deltas, corner=(0.0, 0.0)).counts.tolist() == F.box_count(SQUARE, deltas, corner=(0.0, 0.0)).counts.tolist()


def test_dimension_of_smooth_curves():
    deltas = [2.0 ** -k for k in range(2, 9)]
    seg = (np.array([[0.0, 0.0]]), np.array([[0.8, 0.6]]))
    assert F.dimension_fit(F.box_count(seg, deltas)).value == pytest.approx(1.0, abs=0.05)
    assert F.dimension_fit(F.box_count(SQUARE, deltas)).value == pytest.approx(1.0, abs=0.05)
    circle = [np.stack([np.cos(t), np.sin(t)], 1) for t in [np.linspace(0, 2 * np.pi, 4001)]]
    assert F.dimension_fit(F.box_count(circle, deltas)).value == pytest.approx(1.0, abs=0.05)


def test_koch_box_dimension():
    tr = F.box_count(G.koch_snowflake(7), [3.0 ** -k for k in range(1, 7)])
    est = F.dimension_fit(tr)
    assert est.value == pytest.approx(F.KOCH_DIMENSION, abs=0.05)
    c = tr.counts
    assert c[-1] / c[-2] == pytest.approx(4.0, rel=0.05)


def test_box_count_errors_and_csv():
    with pytest.raises(EmptyBoundary):
        F.box_count([], [0.5])
    tr = F.box_count(SQUARE, [0.5, 0.25, 0.125])
    with pytest.raises(InsufficientRows):
        F.dimension_fit(tr)
    assert tr.to_csv().splitlines()[:2] == ["delta,count", "0.5,8"]


def test_dim_f_smooth_and_one_dimensional():
    est = F.dim_f_estimate(G.Ball((0.0, 0.0), 1.0), None, [0.3, 0.6, 0.9])
    assert est.value == 1.0 and not any(est.diagnostics["divergent"])
    assert F.dim_f_estimate(G.counterexample_set(0.5, 8)).value == 0.0


def test_koch_series():
    lo = F.koch_series_bound(0.5, 30)
    assert lo.ratio == pytest.approx(4 / 3 ** 1.5) and not lo.diverges
    inc = np.diff(lo.partial_sums)
    assert np.all(inc[1:] < inc[:-1])
    limit = lo.partial_sums[0] / (1 - lo.ratio)
    assert lo.partial_sums[-1] == pytest.approx(limit, rel=1e-3)
    hi = F.koch_series_bound(0.8, 30)
    assert hi.ratio == pytest.approx(4 / 3 ** 1.2) and hi.diverges
    inc = np.diff(hi.partial_sums)
    assert np.all(inc[1:] > inc[:-1])


def test_threshold_is_exact():
    t = F.KOCH_THRESHOLD
    assert t == pytest.approx(2 - math.log(4) / math.log(3))
    assert F.koch_series_bound(t, 2).ratio == pytest.approx(1.0, abs=1e-15)
    assert not F.ratio_exceeds_one(t) and F.ratio_exceeds_one(np.nextafter(t, 1.0))
