import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nlperim import geometry as G
from nlperim.errors import DegenerateSet, DomainError, NonPositiveInterval

pairs = st.lists(
    st.tuples(st.floats(-50, 50), st.floats(0.01, 10)).map(lambda t: (t[0], t[0] + t[1])),
    min_size=1,
    max_size=8,
)


def test_make_interval_set_examples():
    assert G.make_interval_set([(0, 1)]).intervals == ((0.0, 1.0),)
    assert G.make_interval_set([(0, 1), (0.5, 2)]).intervals == ((0.0, 2.0),)
    assert G.make_interval_set([(1, 2), (0, 0.5)]).intervals == ((0.0, 0.5), (1.0, 2.0))
    with pytest.raises(NonPositiveInterval):
        G.make_interval_set([(1, 1)])


@given(pairs)
def test_make_interval_set_invariants(raw):
    E = G.make_interval_set(raw)
    ends = [v for iv in E for v in iv]
    assert ends == sorted(ends)
    assert all(b > a for a, b in E)
    # every raw point is covered
    for a, b in raw:
        m = 0.5 * (a + b)
        assert any(lo <= m <= hi for lo, hi in E)
    assert E.measure <= math.fsum(b - a for a, b in raw) + 1e-9


def test_counterexample_set():
    assert G.counterexample_set(0.5, 1).intervals == ((1 / 8, 1 / 4),)
    assert G.counterexample_set(0.5, 2).intervals == ((1 / 32, 1 / 16), (1 / 8, 1 / 4))
    with pytest.raises(DomainError):
        G.counterexample_set(0.5, 0)
    with pytest.raises(DomainError):
        G.counterexample_set(1.5, 3)


def test_koch_counts_and_area():
    assert G.koch_snowflake(0).triangle_counts() == [1]
    assert G.koch_snowflake(1).triangle_counts() == [1, 3]
    assert G.koch_snowflake(2).triangle_counts() == [1, 3, 12]
    for k in range(5):
        E = G.koch_snowflake(k)
        assert E.boundary.shape[0] == 3 * 4 ** k
        assert E.area == pytest.approx(G.koch_area_closed_form(k), rel=1e-12)


def test_rasterize_examples():
    g = G.rasterize(G.HalfSpace((0.0, 1.0), 0.0), (-1, -1, 1, 1), 0.5)
    assert g.bits.shape == (4, 4)
    assert g.bits[:2].all() and not g.bits[2:].any()
    assert not G.rasterize(G.Ball((0.0, 0.0), 0.4), (-1, -1, 1, 1), 1.0).bits.any()


def test_rasterize_ball_measure_converges():
    errs = [abs(G.rasterize(G.Ball((0.0, 0.0), 1.0), (-1.5, -1.5, 1.5, 1.5), 2.0 ** -j).measure - math.pi) for j in range(3, 8)]
    assert errs[-1] < 0.01
    assert sum(b > a for a, b in zip(errs, errs[1:])) <= 1


def test_scanline_fill_matches_point_test():
    P = G.koch_snowflake(3).polygon()
    h = 0.013
    fast = G.rasterize(P, (-0.7, -0.7, 0.7, 0.7), h)
    X, Y = fast.centers()
    slow = P.contains(np.stack([X.ravel(), Y.ravel()], axis=1)).reshape(X.shape)
    assert (fast.bits != slow).sum() <= 0.002 * slow.size


def test_signed_distance_examples():
    assert G.signed_distance(G.HalfSpace((0.0, 1.0), 0.0), (3.0, -2.0)) == pytest.approx(-2.0)
    assert G.signed_distance(G.Ball((0.0, 0.0), 1.0), (2.0, 0.0)) == pytest.approx(1.0)
    assert G.signed_distance(G.Ball((0.0, 0.0), 1.0), (0.0, 0.0)) == pytest.approx(-1.0)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_signed_distance_sign_matches_membership(x, y):
    B = G.Ball((0.2, -0.1), 1.3)
    d = G.signed_distance(B, (x, y))
    if abs(d) > 1e-9:
        assert (d < 0) == bool(B.contains([(x, y)])[0])


def test_tubular_set_examples():
    B = G.Ball((0.0, 0.0), 1.0)
    assert G.tubular_set(B, 0.5).radius == pytest.approx(1.5)
    assert G.tubular_set(B, -0.5).radius == pytest.approx(0.5)
    H = G.tubular_set(G.HalfSpace((0.0, 1.0), 0.0), 0.2)
    assert H.offset == pytest.approx(0.2)
    with pytest.raises(DegenerateSet):
        G.tubular_set(B, -1.0)


def test_grid_tubular_set_grows():
    g = G.rasterize(G.Ball((0.0, 0.0), 0.5), (-1, -1, 1, 1), 0.05)
    grown = G.tubular_set(g, 0.2)
    assert (grown.bits >= g.bits).all()
    # staircase error is at most perimeter * h
    assert abs(grown.measure - math.pi * 0.7 ** 2) <= 2 * math.pi * 0.7 * g.h


def test_grid_set_roundtrip():
    rng = np.random.default_rng(1)
    g = G.GridSet(rng.random((7, 11)) < 0.5, (0.5, -2.0), 0.25)
    back = G.GridSet.from_dict(g.to_dict())
    assert back.same_frame(g) and (back.bits == g.bits).all()


@given(pairs)
def test_interval_complement_is_involution(raw):
    E = G.make_interval_set(raw)
    assert E.complement().complement().intervals == E.intervals
