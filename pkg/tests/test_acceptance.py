"""Acceptance criteria, each at its stated tolerance. One pass/fail line per criterion."""
import math
from functools import lru_cache

import numpy as np
import pytest

from nlperim import curvature as C
from nlperim import extension as X
from nlperim import fractal as F
from nlperim import geometry as G
from nlperim import kernel as K
from nlperim import minimizer as M
from nlperim import perimeter as P

RESULTS = {}


def report(number, ok, detail):
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    assert ok, line


@lru_cache(maxsize=1)
def corpus():
    """50 seeded problems with <= 16 free cells, solved exhaustively and by annealing."""
    rows = []
    for k in range(50):
        pb = M.random_problem(k)
        exact = M.brute_force_minimize(pb)
        runs = [M.local_search_minimize(pb, seed=sd) for sd in range(5)]
        rows.append((pb, exact, runs))
    return rows


def _match(a, b):
    return abs(a - b) <= 1e-9 * max(1.0, abs(b))


def test_c01_interval_exactness():
    worst = 0.0
    for s in (0.3, 0.5, 0.7):
        p = K.FracParams(1, s)
        for (a, b), (c, d) in (((0, 1), (1, 2)), ((0, 1), (2, 3))):
            q, _ = K.interaction_quad(G.make_interval_set([(a, b)]), G.make_interval_set([(c, d)]), p)
            ref = K.interaction_1d_closed(a, b, c, d, s)
            worst = max(worst, abs(q - ref) / ref)
    report(1, worst <= 1e-6, f"max relative gap {worst:.2e} (tol 1e-6)")


def test_c02_asymptotic_constant_1d():
    s = 0.999
    val = (1 - s) * P.s_perimeter_global_1d(G.make_interval_set([(0, 1)]), s)
    closed = 2 / 0.999
    ok = abs(val - closed) <= 1e-9 and abs(val - 2) <= 0.002 * 2
    report(2, ok, f"(1-s)P_s = {val:.12f}, closed form gap {abs(val - closed):.1e}, vs 2: {abs(val - 2) / 2:.4%}")


def test_c03_counterexample_divergence():
    E = G.counterexample_set(0.5, 40)
    lo = 0.1 * P.s_perimeter_global_1d(E, 0.9)
    hi = 0.001 * P.s_perimeter_global_1d(E, 0.999)
    report(3, hi >= 5 * lo, f"ratio {hi / lo:.3f} (need >= 5)")


def test_c04_scaling_law():
    s = 0.5
    E1 = G.make_interval_set([(0, 1), (2, 3.5)])
    one = P.s_perimeter_global_1d(E1.scaled(2.0), s) / P.s_perimeter_global_1d(E1, s) / 2 ** (1 - s) - 1
    params = K.FracParams(2, s)
    E2 = G.Polygon(((0.0, 0.0), (1.0, 0.0), (0.3, 0.8)))
    a = P.s_perimeter(E2, None, params)
    b = P.s_perimeter(E2.scaled(2.0), None, params)
    lam = 2 ** (2 - s)
    gap = abs(b.total - lam * a.total)
    bound = 3 * (b.error + lam * a.error)
    ok = abs(one) <= 1e-12 and gap <= bound
    report(4, ok, f"1D rel {abs(one):.1e}; 2D gap {gap:.2e} vs 3*error {bound:.2e}")


def test_c05_half_space_curvature():
    H = G.HalfSpace((0.0, 1.0), 0.0)
    worst_a, ok_generic, detail = 0.0, True, []
    for s in (0.3, 0.5, 0.7):
        p = K.FracParams(2, s)
        worst_a = max(worst_a, abs(C.fmc_pv(H, (0.3, 0.0), p).value))
        g = C.fmc_pv(H, (0.3, 0.0), p, analytic=False, check_cancellation=False)
        ok_generic &= abs(g.value) <= max(g.error, 1e-12)
        detail.append(f"{abs(g.value):.1e}<={g.error:.1e}")
    report(5, worst_a <= 1e-6 and ok_generic, f"analytic {worst_a:.1e}; generic {', '.join(detail)}")


def test_c06_ball_curvature_asymptotics():
    s = 0.99
    v = C.fmc_pv(G.Ball((0.0, 0.0), 1.0), (1.0, 0.0), K.FracParams(2, s), check_cancellation=False).value
    scaled = (1 - s) * abs(v)
    report(6, abs(scaled - 2) <= 0.05 * 2, f"(1-s)|I_s| = {scaled:.5f} (target 2, tol 5%)")


def test_c07_first_variation():
    s = 0.5
    B = G.Ball((0.0, 0.0), 1.0)
    params = K.FracParams(2, s)
    lhs = (2 - s) * P.s_perimeter(B, None, params).total
    curv = C.fmc_pv(B, (1.0, 0.0), params, check_cancellation=False).value
    gap = abs(lhs + 2 * math.pi * curv)
    fd_lhs, fd_rhs, _ = C.first_variation_check(B, "dilation", s)
    ok = gap <= 0.01 * lhs and abs(fd_lhs - fd_rhs) <= 0.01 * abs(fd_lhs)
    report(7, ok, f"scaling side {lhs:.6f}, curvature side {-2 * math.pi * curv:.6f}, rel {gap / lhs:.1e}; deformation rel {abs(fd_lhs - fd_rhs) / abs(fd_lhs):.1e}")


def test_c08_graph_formula():
    p = K.FracParams(2, 0.5)
    sg = G.Subgraph((0.0, 0.0, 0.05), 1.0)
    g = C.fmc_graph_local(sg, p)
    w = C.fmc_pv(sg, (0.0, 0.0), p, window=sg.cylinder(), check_cancellation=False, r_loc=1.0).value
    rel = abs(g / w - 1)
    report(8, rel <= 0.01, f"graph {g:.6f} vs PV {w:.6f}, rel {rel:.1e}")


def test_c09_minimizer_oracle():
    rows = corpus()
    single = sum(_match(runs[0].energy, exact.energy) for _, exact, runs in rows)
    best = sum(_match(min(r.energy for r in runs), exact.energy) for _, exact, runs in rows)
    report(9, best == 50 and single >= 46, f"min over seeds {best}/50, single seed {single}/50")


def test_c10_variational():
    bad = sum(M.variational_check(pb, exact.bits) != (True, True) for pb, exact, _ in corpus())
    report(10, bad == 0, f"{bad} violations over 50 minimizers")


def test_c11_strip_comparison():
    ok = 0
    for k in range(20):
        rng = np.random.default_rng(100 + k)
        lo = int(rng.integers(8, 12))
        hi = lo + int(rng.integers(0, 3))
        pb = M.strip_problem(24, 24, (8, 16), (8, 16), lo, hi, rng)
        ok += M.strip_comparison_test(pb, lo, hi)
    report(11, ok == 20, f"{ok}/20 strips")


def test_c12_monotonicity():
    p = K.FracParams(2, 0.5)
    H = G.HalfSpace((0.0, 1.0), 0.0)
    tr = X.phi_trace(H, [0.25, 0.5, 0.75, 1.0], p)
    spread = tr.spread()
    B = G.Ball((0.0, -1.0), 1.0)
    a = X.phi_trace(B, [0.5], p).phi[0]
    b = X.phi_trace(B.scaled(2.0), [1.0], p).phi[0]
    scale_gap = abs(a - b) / abs(a)
    ok = spread <= 0.03 and scale_gap <= 2 * max(spread, np.finfo(float).eps)
    report(12, ok, f"half-plane spread {spread:.1e}; scale gap {scale_gap:.1e}")


def test_c13_fractional_laplacian():
    xs = np.linspace(-200.0, 200.0, 2 ** 17, endpoint=False)
    i0 = int(np.argmin(np.abs(xs)))
    worst = 0.0
    for s in (0.3, 0.5, 0.7):
        spec = X.frac_laplacian_fourier(np.exp(-xs ** 2), s, xs[1] - xs[0])[i0]
        direct = X.frac_laplacian_direct(lambda t: np.exp(-np.asarray(t) ** 2), 0.0, s)
        worst = max(worst, abs(direct / spec - 1))
    report(13, worst <= 1e-3, f"max relative gap {worst:.1e} (tol 1e-3)")


def test_c14_koch():
    tr = F.box_count(G.koch_snowflake(7), [3.0 ** -k for k in range(1, 7)])
    dim = F.dimension_fit(tr).value
    est = F.dim_f_estimate(G.koch_snowflake(9), None, np.round(np.arange(0.64, 0.85, 0.02), 2))
    s_flip = est.diagnostics["s_convergent"]
    t = F.KOCH_THRESHOLD
    exact = (not F.ratio_exceeds_one(t)) and F.ratio_exceeds_one(np.nextafter(t, 1.0)) and abs(F.koch_series_bound(t, 1).ratio - 1) < 1e-14
    ok = abs(dim - 1.26186) <= 0.05 and abs(s_flip - 0.738) <= 0.05 and exact
    report(14, ok, f"box dimension {dim:.4f}; flip s = {s_flip:.2f} (crossing {est.diagnostics['s_crossing']:.3f}); series ratio exact {exact}")


def test_c15_density():
    bad = 0
    for pb, exact, _ in corpus():
        d = M.density_report(pb, exact.bits, [3, 5, 8])
        lo = np.minimum(d.min_inner, d.min_outer)
        bad += not (lo.min() >= 0.1 * math.pi and d.stable())
    report(15, bad == 0, f"{bad} failing minimizers of 50")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
