import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlperim import extension as X
from nlperim import geometry as G
from nlperim import kernel as K
from nlperim import minimizer as M
from nlperim.errors import AliasWarning, OriginNotOnBoundary, RegionOutOfDomain, UnboundedTrace

P1 = K.FracParams(1, 0.5)
P2 = K.FracParams(2, 0.5)
ZS = np.geomspace(0.05, 20.0, 12)


def _xs(N, h):
    return (np.arange(N) - (N - 1) / 2) * h


def test_poisson_kernel_slices_integrate_to_one():
    from scipy import integrate

    for s in (0.3, 0.5, 0.8):
        for z in (0.1, 1.0, 5.0):
            m, _ = integrate.quad(lambda x: X.poisson_kernel(x, z, 1, s), -np.inf, np.inf)
            assert m == pytest.approx(1.0, rel=1e-8)


def test_constant_trace_stays_constant():
    for params, u in ((P1, np.ones(64)), (P2, np.ones((32, 32)))):
        f = X.poisson_extend(u, ZS, params, h=0.1, tail=1.0)
        assert np.allclose(f.values, 1.0, atol=1e-12)


def test_sign_trace_is_zero_on_the_axis():
    xs = _xs(101, 0.1)
    f = X.poisson_extend(np.sign(xs), ZS, P1, h=0.1, tail=(-1.0, 1.0))
    assert np.allclose(f.values[:, 50], 0.0, atol=1e-12)


def test_far_field_sees_the_complement():
    xs = _xs(201, 0.05)
    u = np.where(np.abs(xs) < 1, 1.0, -1.0)
    zs = np.array([1.0, 10.0, 100.0, 1000.0])
    f = X.poisson_extend(u, zs, P1, h=0.05, tail=-1.0)
    mid = f.values[:, 100]
    assert np.all(np.diff(mid) < 0) and mid[-1] == pytest.approx(-1.0, abs=0.01)


@settings(max_examples=15)
@given(st.integers(0, 10 ** 6), st.floats(0.2, 0.8))
def test_maximum_principle(seed, s):
    u = np.random.default_rng(seed).uniform(-2, 3, 48)
    f = X.poisson_extend(u, ZS, K.FracParams(1, s), h=0.2, tail=(0.5, -1.0))
    assert f.values.min() >= -2 - 1e-12 and f.values.max() <= 3 + 1e-12


def test_unbounded_trace_rejected():
    with pytest.raises(UnboundedTrace):
        X.poisson_extend(np.array([0.0, np.inf, 1.0]), ZS, P1)


def test_field_roundtrip():
    u = np.sign(_xs(40, 0.1))
    f = X.poisson_extend(u, ZS, P1, h=0.1, tail=(-1.0, 1.0))
    g = X.ExtensionField.from_bytes(f.to_bytes())
    assert np.array_equal(g.values, f.values) and np.array_equal(g.trace, f.trace)
    assert g.tail == f.tail and g.a == f.a


def test_weighted_energy_constant_is_zero():
    f = X.poisson_extend(np.ones((24, 24)), ZS, P2, h=0.1, tail=1.0)
    assert X.weighted_energy(f, 0.5) == pytest.approx(0.0, abs=1e-12)


def _half_plane_field(h, L=2.0):
    N = int(round(2 * L / h))
    ys = _xs(N, h)
    u = np.where(ys[:, None] < 0, 1.0, -1.0) * np.ones((1, N))
    return X.poisson_extend(u, ZS, P2, h=h, tail=0.0)


def test_weighted_energy_refinement_and_monotone():
    coarse, fine = _half_plane_field(0.1), _half_plane_field(0.05)
    a, b = X.weighted_energy(coarse, 0.5), X.weighted_energy(fine, 0.5)
    assert abs(a - b) <= 0.02 * b
    vals = [X.weighted_energy(fine, r) for r in (0.2, 0.4, 0.8)]
    assert vals[0] <= vals[1] <= vals[2]
    with pytest.raises(RegionOutOfDomain):
        X.weighted_energy(fine, 5.0)


def test_half_plane_phi_matches_closed_form():
    # s = 1/2: grad u~ = 2/(pi rho) on the half-plane; Phi = 8/3 for every r
    tr = X.phi_trace(G.HalfSpace((0.0, 1.0), 0.0), [0.5, 1.0, 2.0], P2)
    assert np.allclose(tr.phi, 8 / 3, rtol=1e-4)
    assert tr.spread() <= 0.03
    assert X.phi_bound_check(tr, P2)


def test_ball_phi_nondecreasing_and_scale_invariant():
    B = G.Ball((0.0, -1.0), 1.0)
    tr = X.phi_trace(B, [0.25, 0.5, 1.0], P2)
    p = tr.phi
    assert np.all(p[1:] >= p[:-1] * 0.98)
    big = X.phi_trace(B.scaled(2.0), [0.5, 1.0, 2.0], P2).phi
    assert np.allclose(big, p, rtol=1e-6)


def test_phi_origin_must_be_on_boundary():
    with pytest.raises(OriginNotOnBoundary):
        X.phi_trace(G.Ball((0.0, -2.0), 1.0), [0.5], P2)


def test_phi_on_minimizer_is_bounded():
    pb = M.random_problem(3)
    bits = M.mincut_minimize(pb).bits
    g = pb.grid(bits)
    cx, cy = _boundary_point(g)
    shifted = g.translated((-cx, -cy))
    tr = X.phi_trace(shifted, [1.0, 2.0], P2, tail=pb.tail.translated((-cx, -cy)))
    assert X.phi_bound_check(tr, P2)


def _boundary_point(g):
    bits = g.bits
    i, j = np.argwhere(bits[:, 1:] != bits[:, :-1])[len(np.argwhere(bits[:, 1:] != bits[:, :-1])) // 2]
    return g.origin[0] + (j + 1) * g.h, g.origin[1] + (i + 0.5) * g.h


def test_monotonicity_trace_csv():
    tr = X.MonotonicityTrace([(0.5, 1.0), (1.0, 2.0)])
    assert tr.to_csv().splitlines() == ["r,phi", "0.5,1.0", "1.0,2.0"]


@pytest.mark.parametrize("n", [1, 2])
@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
def test_c_constant(n, s):
    c = X.c_constant(n, s)
    assert c > 0
    assert c == pytest.approx(X.c_constant_closed(n, s), rel=1e-8)


def test_c_constant_symmetric_integrand():
    from scipy import integrate

    s = 0.5
    f = lambda t: (1 - math.cos(t)) * abs(t) ** (-1 - 2 * s)  # noqa: E731
    pos = integrate.quad(f, 0, 1)[0]
    neg = integrate.quad(f, -1, 0)[0]
    assert neg == pytest.approx(pos, rel=1e-10)
    # oscillatory tails with the cosine weight, once per side
    tail = integrate.quad(lambda t: t ** (-1 - 2 * s), 1, np.inf)[0] - integrate.quad(lambda t: t ** (-1 - 2 * s), 1, np.inf, weight="cos", wvar=1.0)[0]
    tail_neg = integrate.quad(lambda t: (-t) ** (-1 - 2 * s), -np.inf, -1)[0] - integrate.quad(lambda t: t ** (-1 - 2 * s), 1, np.inf, weight="cos", wvar=-1.0)[0]
    assert tail_neg == pytest.approx(tail, rel=1e-10)
    full = pos + neg + tail + tail_neg
    assert 1 / full == pytest.approx(X.c_constant(1, s), rel=1e-6)


def test_direct_laplacian_trivial_inputs():
    for s in (0.3, 0.7):
        assert X.frac_laplacian_direct(lambda t: 2.0 + 0 * t, 0.3, s) == pytest.approx(0.0, abs=1e-10)


def test_direct_laplacian_gaussian_closed_form():
    for s in (0.3, 0.5, 0.7):
        exact = 2 ** (2 * s) * math.gamma(s + 0.5) / math.sqrt(math.pi)
        assert X.frac_laplacian_direct(lambda t: np.exp(-np.asarray(t) ** 2), 0.0, s) == pytest.approx(exact, rel=1e-6)
    g2 = lambda p: math.exp(-float(np.sum(np.asarray(p) ** 2)))  # noqa: E731
    exact2 = 0.5 * 2 ** (1 + 2 * 0.5) * math.gamma(1.5)
    assert X.frac_laplacian_direct(g2, (0.0, 0.0), 0.5, n=2) == pytest.approx(exact2, rel=1e-4)


def test_direct_laplacian_near_one_is_minus_second_derivative():
    # -u''(0) = 2 for exp(-x^2)
    assert X.frac_laplacian_direct(lambda t: np.exp(-np.asarray(t) ** 2), 0.0, 0.999) == pytest.approx(2.0, rel=0.02)


def test_fourier_cos_mode_eigenvalue():
    N, L = 256, 2 * math.pi
    xs = np.arange(N) * L / N
    for k in (1, 3, 7):
        u = np.cos(k * xs)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasWarning)
            out = X.frac_laplacian_fourier(u, 0.4, L / N)
        assert np.allclose(out, k ** 0.8 * u, atol=1e-10)


def test_fourier_near_one_matches_second_derivative():
    xs = np.linspace(-20, 20, 2 ** 12, endpoint=False)
    h = xs[1] - xs[0]
    u = np.exp(-xs ** 2)
    minus_u2 = X.frac_laplacian_fourier(u, 1.0, h)
    assert np.allclose(minus_u2, (2 - 4 * xs ** 2) * u, atol=1e-9)
    # the gap is (1 - s) |xi|^2 log|xi|^2 to first order, so it shrinks linearly
    gaps = [np.abs(X.frac_laplacian_fourier(u, 1 - eps, h) - minus_u2).max() for eps in (1e-3, 1e-4, 1e-5)]
    assert gaps[0] / gaps[1] == pytest.approx(10, rel=0.05) and gaps[1] / gaps[2] == pytest.approx(10, rel=0.05)
    # a mode at |xi| = 1 has no logarithmic gap
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasWarning)
        mode = np.cos(2 * np.pi * np.arange(256) / 256)
        out = X.frac_laplacian_fourier(mode, 0.9999, 2 * np.pi / 256)
    assert np.abs(out - mode).max() <= 1e-6


def test_fourier_warns_when_not_vanishing():
    with pytest.warns(AliasWarning):
        X.frac_laplacian_fourier(np.ones(16), 0.5)


def _u_tilde_oracle(u, h, tail, p, z, s, n=24):
    """u~ at (p, z) by tensor Gauss-Legendre over each trace cell (the kernel is smooth for z > 0)."""
    from numpy.polynomial.legendre import leggauss

    g, w = leggauss(n)
    N = u.shape[0]
    c = (np.arange(N) - (N - 1) / 2) * h
    total = tail
    for i in range(N):
        for j in range(N):
            xs = c[j] + 0.5 * h * g
            ys = c[i] + 0.5 * h * g
            dx, dy = np.meshgrid(xs - p[0], ys - p[1])
            ker = X.poisson_kernel(np.stack([dx, dy], axis=-1), z, 2, s)
            total += (u[i, j] - tail) * 0.25 * h * h * (w[:, None] * w[None, :] * ker).sum()
    return total


def test_exact_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    u = np.where(rng.random((8, 8)) < 0.5, 1.0, -1.0)
    f = X.poisson_extend(u, [0.5, 0.7], P2, h=0.25, tail=-1.0)
    p, z, e = np.array([0.13, -0.31]), 0.7, 1e-4
    g = f.gradient(p[None], z)[0]
    fd = [
        (_u_tilde_oracle(u, 0.25, -1.0, p + e * np.eye(2)[k], z, 0.5) - _u_tilde_oracle(u, 0.25, -1.0, p - e * np.eye(2)[k], z, 0.5)) / (2 * e)
        for k in range(2)
    ]
    fd.append((_u_tilde_oracle(u, 0.25, -1.0, p, z + e, 0.5) - _u_tilde_oracle(u, 0.25, -1.0, p, z - e, 0.5)) / (2 * e))
    assert np.allclose(g, fd, atol=1e-6)
    # the sampled level agrees with the oracle at a sample point
    assert f.values[1, 3, 4] == pytest.approx(_u_tilde_oracle(u, 0.25, -1.0, f.coords()[0][[4]].tolist() + f.coords()[1][[3]].tolist(), z, 0.5), abs=1e-8)
