import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlperim import curvature as C
from nlperim import geometry as G
from nlperim import kernel as K

P05 = K.FracParams(2, 0.5)


def test_half_space_is_exactly_zero():
    assert C.fmc_pv(G.HalfSpace((0.0, 1.0), 0.0), (2.5, 0.0), P05).value == 0.0


def test_ball_matches_closed_form():
    for analytic in (True, False):
        v = C.fmc_pv(G.Ball((0.0, 0.0), 1.0), (1.0, 0.0), P05, analytic=analytic, check_cancellation=False).value
        assert v < 0
        assert v == pytest.approx(C.ball_curvature_closed_form(0.5), rel=0.01)


@settings(max_examples=10)
@given(st.floats(0.2, 5.0), st.floats(0.0, 2 * math.pi))
def test_ball_curvature_scaling(R, t):
    v = C.fmc_pv(G.Ball((0.0, 0.0), R), (R * math.cos(t), R * math.sin(t)), P05, check_cancellation=False).value
    assert v == pytest.approx(C.ball_curvature_closed_form(0.5) * R ** -0.5, rel=1e-6)


@pytest.mark.parametrize("s", [0.3, 0.5, 0.8])
def test_truncation_gaps_shrink_geometrically(s):
    # smooth boundary: the truncated integral converges like rho^(1-s)
    tr = np.array(C.fmc_pv(G.Ball((0.0, 0.0), 1.0), (1.0, 0.0), K.FracParams(2, s)).pv_trace)
    gaps = np.abs(np.diff(tr[:, 1]))
    assert np.allclose(gaps[1:] / gaps[:-1], 2.0 ** -(1 - s), rtol=0.01)
    assert abs(tr[-1, 1] - C.ball_curvature_closed_form(s)) <= gaps[-1] / (2 ** (1 - s) - 1) * 1.05


def test_flat_graph_is_zero():
    assert C.fmc_graph_local(G.Subgraph((0.0, 0.0, 0.0), 1.0), P05) == 0.0


def test_asymptotic_scan_targets():
    (row,) = C.fmc_asymptotic_scan(G.Ball((0.0, 0.0), 2.0), (2.0, 0.0), [0.99])
    assert row[2] == pytest.approx(1.0)
    assert abs(abs(row[1]) - 1.0) <= 0.05


def test_euler_lagrange_residual_signs():
    H = G.HalfSpace((0.0, 1.0), 0.0)
    flat, _ = C.euler_lagrange_residual(G.rasterize(H, (-1, -1, 1, 1), 1 / 16), None, P05, exterior=H)
    board = G.GridSet((np.add.outer(np.arange(32), np.arange(32)) % 2).astype(bool), (-1, -1), 1 / 16)
    rough, _ = C.euler_lagrange_residual(board, None, P05)
    assert flat < 1e-6
    assert rough >= 10 * max(flat, 1e-3)
    _, rec = C.euler_lagrange_residual(G.rasterize(G.Ball((0.0, 0.0), 0.5), (-1, -1, 1, 1), 1 / 32), G.Ball((0.0, 0.0), 0.8), P05)
    assert rec and all(v < 0 for _, _, v in rec)


def test_first_variation_symmetric_fields():
    B = G.Ball((0.0, 0.0), 1.0)
    for field in ((1.0, 0.0), "rotation"):
        lhs, rhs, gap = C.first_variation_check(B, field, 0.5)
        assert abs(lhs) < 1e-8 and abs(rhs) < 1e-8


def test_curvature_continuity():
    base = G.Subgraph((0.0, 0.0, 0.05), 1.0)
    same = C.curvature_continuity_check(base, [base], P05)
    assert same["rows"][0]["gap"] < 1e-8
    seq = [G.Subgraph((0.0, 0.0, 0.05, 0.0, 1.0 / k), 1.0) for k in (2, 4, 8, 16)]
    out = C.curvature_continuity_check(base, seq, P05)
    assert out["ok"]
    gaps = [r["gap"] for r in out["rows"]]
    ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
    assert np.all(np.abs(ratios - 2) < 0.1)


def test_far_change_is_bounded_by_symmetric_difference():
    base = G.Subgraph((0.0, 0.0, 0.05), 1.0)
    blob = G.Ball((0.0, 3.0), 0.5)
    out = C.curvature_continuity_check(base, [("far", blob)], P05)
    assert out["rows"][0]["gap"] <= 2 * blob.area / 1.0 ** 2.5
