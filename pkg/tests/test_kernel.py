import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from nlperim import geometry as G
from nlperim import kernel as K
from nlperim.errors import OverlapError


def test_omega_values():
    assert K.omega(0) == pytest.approx(1.0)
    assert K.omega(1) == pytest.approx(2.0)
    assert K.omega(2) == pytest.approx(math.pi)
    assert K.omega(3) == pytest.approx(4 * math.pi / 3)


def test_interaction_1d_closed_examples():
    assert K.interaction_1d_closed(0, 1, 1, 2, 0.5) == pytest.approx(4 * (2 - math.sqrt(2)), rel=1e-12)
    assert K.interaction_1d_closed(0, 1, 2, 3, 0.5) == pytest.approx(4 * (2 * math.sqrt(2) - 1 - math.sqrt(3)), rel=1e-12)
    s = 0.9999
    assert (1 - s) * K.interaction_1d_closed(0, 1, 1, 2, s) == pytest.approx(1.0, rel=1e-3)


@given(
    st.floats(-3, 3),
    st.floats(0.1, 2),
    st.floats(0.05, 2),
    st.floats(0.1, 2),
    st.floats(0.1, 0.9),
)
def test_interaction_1d_closed_matches_dblquad(a, la, gap, lc, s):
    b, c = a + la, a + la + gap
    d = c + lc
    ref, _ = integrate.dblquad(lambda y, x: (y - x) ** (-1 - s), a, b, c, d, epsabs=0, epsrel=1e-10)
    assert K.interaction_1d_closed(a, b, c, d, s) == pytest.approx(ref, rel=1e-7)


def test_interval_interaction_examples():
    E = G.make_interval_set([(0, 1)])
    assert K.interval_interaction(E, G.make_interval_set([(1, 2)]), 0.5) == pytest.approx(2.343146, abs=1e-6)
    assert K.interval_interaction(E, G.IntervalSet(()), 0.5) == 0.0


def test_interval_interaction_half_line():
    # L_s((0,1), (2, inf)) at s = 1/2 equals 4 (sqrt 2 - 1)
    val = K.interval_interaction(G.make_interval_set([(0, 1)]), G.IntervalSet(((2.0, math.inf),)), 0.5)
    assert val == pytest.approx(4 * (math.sqrt(2) - 1), rel=1e-12)
    assert val <= K.tail_bound(1.0, 1.0, K.FracParams(1, 0.5))


def test_tail_bound():
    p = K.FracParams(1, 0.5)
    assert K.tail_bound(1.0, 1.0, p) == pytest.approx(4.0)
    assert K.tail_bound(0.0, 1.0, p) == 0.0
    assert K.tail_bound(1.0, 1e12, p) < 1e-5


def test_interaction_quad_overlap_rejected():
    g = G.rasterize(G.Ball((0.0, 0.0), 1.0), (-1, -1, 1, 1), 0.1)
    with pytest.raises(OverlapError):
        K.interaction_quad(g, g, K.FracParams(2, 0.5))


def test_interaction_quad_squares_monte_carlo():
    s = 0.5
    A, B = G.Box(0, 0, 1, 1), G.Box(2, 0, 3, 1)
    val, err = K.interaction_quad(A, B, K.FracParams(2, s))
    rng = np.random.default_rng(7)
    chunks = []
    for _ in range(10):
        x = rng.random((10 ** 6, 2))
        y = rng.random((10 ** 6, 2)) + (2.0, 0.0)
        chunks.append(np.linalg.norm(x - y, axis=1) ** (-2 - s))
    f = np.concatenate(chunks)
    mean, sigma = f.mean(), f.std() / math.sqrt(f.size)
    assert abs(val - mean) <= 3 * sigma + err


@given(st.floats(0.5, 3.0), st.floats(0.1, 0.9))
def test_interval_interaction_scaling(lam, s):
    E = G.make_interval_set([(0, 1)])
    F = G.make_interval_set([(1.5, 2.5)])
    a = K.interval_interaction(E, F, s)
    b = K.interval_interaction(E.scaled(lam), F.scaled(lam), s)
    assert b == pytest.approx(lam ** (1 - s) * a, rel=1e-10)
