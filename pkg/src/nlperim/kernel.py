"""The interaction functional L_s(A, B) = int_A int_B |x - y|^(-n-s) dy dx.

Three evaluation paths:

* 1D interval unions: exact closed forms, plus an independent quadrature
  (outer graded Gauss rule, inner antiderivative) used as a cross-check.
* planar analytic shapes: for each outer node x the inner integral is an
  angular integral of closed-form radial masses along rays (see ``rays``);
  the outer integral is polar around a centre of A with graded radial rules.
* pixel sets on a common grid: exact cell-pair integrals W(delta) and
  integer pair counts from an FFT cross-correlation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import signal, special

from . import quadrature as qd
from . import rays
from .errors import DomainError, OrderingError, OverlapError, ToleranceNotMet
from .geometry import GridSet, IntervalSet, is_empty

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FracParams:
    n: int = 2
    s: float = 0.5

    def __post_init__(self):
        if self.n not in (1, 2):
            raise DomainError("n must be 1 or 2")
        if not 0.0 < self.s < 1.0:
            raise DomainError("s must lie in (0, 1)")


def _default_pv_radii():
    return tuple(2.0 ** -j for j in range(1, 9))


@dataclass(frozen=True)
class QuadratureSpec:
    rel_tol: float = 1e-4
    abs_tol: float = 1e-12
    max_subdivision_depth: int = 5
    tail_radius: float | None = None
    pv_radii: tuple = field(default_factory=_default_pv_radii)

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("tolerances must be positive")
        r = np.asarray(self.pv_radii, dtype=float)
        if r.size and (np.any(r <= 0) or np.any(np.diff(r) >= 0)):
            raise DomainError("pv_radii must be positive and strictly decreasing")
        if self.max_subdivision_depth < 1:
            raise DomainError("max_subdivision_depth must be >= 1")

    def tolerance(self, value):
        return max(self.abs_tol, self.rel_tol * abs(value))


def omega(d):
    """Volume of the unit ball in R^d."""
    if d < 0:
        raise DomainError("dimension must be nonnegative")
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def tail_bound(measure_A, d, params):
    """Upper bound n omega_n / s * |A| * d^(-s) for sets at distance d."""
    if not d > 0:
        raise DomainError("separation must be positive")
    if measure_A == 0:
        return 0.0
    return params.n * omega(params.n) / params.s * measure_A * d ** (-params.s)


# ---------------------------------------------------------------------------
# 1D closed forms


def _powdiff(x, y, p):
    """x^p - y^p without cancellation when x and y are close (x, y > 0)."""
    if y == 0.0:
        return x ** p
    return y ** p * math.expm1(p * math.log1p((x - y) / y))


def interaction_1d_closed(a, b, c, d, s):
    """int_a^b int_c^d (y - x)^(-1-s) dy dx for a < b <= c < d.

    ``a`` may be -inf and ``d`` may be +inf (not both).
    """
    if not (a < b <= c < d):
        raise OrderingError(f"need a < b <= c < d, got {(a, b, c, d)}")
    if not 0.0 < s < 1.0:
        raise DomainError("s must lie in (0, 1)")
    if math.isinf(a) and math.isinf(d):
        return math.inf
    p = 1.0 - s
    norm = 1.0 / (s * p)
    if math.isinf(d):
        return norm * _powdiff(c - a, c - b, p)
    if math.isinf(a):
        return norm * _powdiff(d - b, c - b, p)
    gap = c - b
    if gap > 0 and max(b - a, d - c) < 0.05 * gap:
        # well separated: smooth kernel, tensor Gauss avoids cancellation
        x, w = qd.gauss_legendre(10)
        xs = a + (b - a) * x
        ys = c + (d - c) * x
        k = (ys[None, :] - xs[:, None]) ** (-1.0 - s)
        return float((b - a) * (d - c) * (w @ k @ w))
    val = _powdiff(c - a, c - b, p) - _powdiff(d - a, d - b, p)
    return max(norm * val, 0.0)


def _pair_closed(I, J, s):
    if I[1] <= J[0]:
        return interaction_1d_closed(I[0], I[1], J[0], J[1], s)
    if J[1] <= I[0]:
        return interaction_1d_closed(J[0], J[1], I[0], I[1], s)
    raise OverlapError("intervals overlap")


def interval_interaction(E, F, s):
    """Exact L_s(E, F) for 1D interval unions (half-lines allowed)."""
    if E.intersect(F).measure > 0:
        raise OverlapError("sets overlap on a set of positive measure")
    return math.fsum(_pair_closed(I, J, s) for I in E for J in F)


# ---------------------------------------------------------------------------
# 1D quadrature


def _mass_1d(x, F, s):
    """int_F |x - y|^(-1-s) dy for points x outside F."""
    out = np.zeros_like(x)
    for c, d in F:
        right = c >= x
        near = np.where(right, c - x, x - d)
        far = np.where(right, d - x, x - c)
        out += rays.power_antiderivative(near, s) - rays.power_antiderivative(far, s)
    return out


def _interaction_1d_quad(E, F, s, level):
    n = 10 + 4 * level
    levels = 8 + 2 * level
    ends = {v for J in F for v in J}
    total = []
    for a, b in E:
        if math.isinf(a) or math.isinf(b):
            raise DomainError("outer set must be bounded")
        x, w, da, db = qd.two_sided_rule(a, b, a in ends, b in ends, n, s, levels)
        out = np.zeros_like(x)
        for c, d in F:
            if c >= b:
                near = (c - b) + db
                far = (d - b) + db
            else:
                near = (a - d) + da
                far = (a - c) + da
            out += rays.power_antiderivative(near, s) - rays.power_antiderivative(far, s)
        total.append(float(np.dot(w, out)))
    return math.fsum(total)


# ---------------------------------------------------------------------------
# planar ray quadrature


def _angular_breaks(crit, extra=4):
    n = crit.shape[0]
    base = np.tile(np.linspace(0.0, TWO_PI, extra, endpoint=False), (n, 1))
    ang = np.sort(np.mod(np.concatenate([crit, base], axis=1), TWO_PI), axis=1)
    return np.concatenate([ang, ang[:, :1] + TWO_PI], axis=1)


def angular_rule(crit, n):
    """Per-point angular nodes/weights on the circle, Sidi-graded at ``crit``."""
    breaks = _angular_breaks(crit)
    x, w = qd.sidi_rule(n)
    lo = breaks[:, :-1, None]
    width = np.diff(breaks, axis=1)[:, :, None]
    theta = (lo + width * x).reshape(crit.shape[0], -1)
    weight = (width * w).reshape(crit.shape[0], -1)
    return theta, weight


def ray_kernel_integral(B, X, s, n_theta=16, chunk=400_000):
    """g(x) = int_B |x - y|^(-2-s) dy for each row of X (x outside B)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty(X.shape[0])
    crit = B.critical_angles(X)
    per = max(1, chunk // ((crit.shape[1] + 8) * n_theta))
    for lo in range(0, X.shape[0], per):
        sl = slice(lo, lo + per)
        theta, weight = angular_rule(crit[sl], n_theta)
        m = theta.shape[1]
        origins = np.repeat(X[sl], m, axis=0)
        dirs = rays.directions(theta.ravel())
        st, en = B.ray_intervals(origins, dirs)
        mass = rays.kernel_mass(st, en, s).reshape(-1, m)
        out[sl] = (mass * weight).sum(axis=1)
    return out


def _outer_nodes(A, B, s, level):
    """Polar quadrature nodes for int_A f with grading at ends touching B."""
    bb = A.bbox()
    if bb is None:
        raise DomainError("outer set must be bounded")
    c = np.array([0.5 * (bb[0] + bb[2]), 0.5 * (bb[1] + bb[3])])
    scale = max(bb[2] - bb[0], bb[3] - bb[1])
    n_phi = 6 + 4 * level
    n_rad = 4 + 2 * level
    levels = 4 + 2 * level
    phi, wphi = angular_rule(A.critical_angles(c[None]), n_phi)
    phi, wphi = phi[0], wphi[0]
    U = rays.directions(phi)
    C = np.broadcast_to(c, U.shape)
    sA, eA = A.ray_intervals(C, U)
    valid = np.isfinite(sA)
    a = np.where(valid, sA, 0.0)
    b = np.where(valid, eA, 1.0)
    eps = 1e-9 * scale
    Ue = U[:, None, :]
    left_pts = c + (a - eps)[..., None] * Ue
    right_pts = c + (b + eps)[..., None] * Ue
    sing_a = valid & (a > 0) & B.contains(left_pts.reshape(-1, 2)).reshape(a.shape)
    sing_b = valid & B.contains(right_pts.reshape(-1, 2)).reshape(b.shape)
    rho, w, _, _ = qd.two_sided_rule(a, b, sing_a, sing_b, n_rad, s, levels)
    w = w * rho * wphi[:, None, None] * valid[..., None]
    X = c + rho[..., None] * Ue[:, :, None, :]
    X = X.reshape(-1, 2)
    w = w.ravel()
    keep = w != 0
    return X[keep], w[keep]


def _check_disjoint(X, B):
    if X.shape[0] and B.contains(X).mean() > 0.01:
        raise OverlapError("sets overlap on a set of positive measure")


def _interaction_2d_rays(A, B, s, level):
    X, w = _outer_nodes(A, B, s, level)
    _check_disjoint(X, B)
    g = ray_kernel_integral(B, X, s, n_theta=6 + 4 * level)
    return float(np.dot(w, g))


def _interaction_grid_shape(G, B, s, level):
    """Grid set against an analytic set: per-cell tensor Gauss."""
    k = 2 + 2 * level
    x, w = qd.gauss_legendre(k)
    ii, jj = np.nonzero(G.bits)
    if ii.size == 0:
        return 0.0
    x0, y0 = G.origin
    h = G.h
    ox = (x0 + (jj[:, None, None] + x[None, :, None]) * h)
    oy = (y0 + (ii[:, None, None] + x[None, None, :]) * h)
    X = np.stack(np.broadcast_arrays(ox, oy), axis=-1).reshape(-1, 2)
    W = np.broadcast_to((w[:, None] * w[None, :]) * h * h, (ii.size, k, k)).ravel()
    _check_disjoint(X, B)
    g = ray_kernel_integral(B, X, s, n_theta=12 + 4 * level)
    return float(np.dot(W, g))


# ---------------------------------------------------------------------------
# exact cell-pair tables on a grid

NEAR_RANGE = 16


def _square_moment(x0, y0, a, b, s, n=24):
    """int over [x0,x0+1]x[y0,y0+1] of z1^a z2^b |z|^(-2-s), vectorised."""
    cx = x0 + 0.5
    cy = y0 + 0.5
    phic = np.arctan2(cy, cx)
    cxs = np.stack([x0, x0 + 1, x0 + 1, x0], axis=-1)
    cys = np.stack([y0, y0, y0 + 1, y0 + 1], axis=-1)
    at_origin = (cxs == 0) & (cys == 0)
    ang = np.arctan2(cys, cxs) - phic[..., None]
    ang = np.mod(ang + np.pi, TWO_PI) - np.pi
    ang = np.where(at_origin, np.nan, ang)
    lo = np.nanmin(ang, axis=-1)
    ang = np.where(at_origin, lo[..., None], ang)
    ang = np.sort(ang, axis=-1)
    xg, wg = qd.gauss_legendre(n)
    width = np.diff(ang, axis=-1)[..., None]
    phi = ang[..., :-1, None] + width * xg
    wt = width * wg
    phi = phi + phic[..., None, None]
    u = np.cos(phi)
    v = np.sin(phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        tx0 = x0[..., None, None] / u
        tx1 = (x0[..., None, None] + 1) / u
        ty0 = y0[..., None, None] / v
        ty1 = (y0[..., None, None] + 1) / v
    rin = np.maximum(np.maximum(np.minimum(tx0, tx1), np.minimum(ty0, ty1)), 0.0)
    rout = np.minimum(np.maximum(tx0, tx1), np.maximum(ty0, ty1))
    e = a + b - s
    with np.errstate(divide="ignore", invalid="ignore"):
        val = (u ** a) * (v ** b) * (rout ** e - rin ** e) / e
    val = np.where(wt > 0, val, 0.0)
    return (val * wt).sum(axis=(-1, -2))


def exact_cell_kernel(d1, d2, s):
    """W(delta) for unit cells: int_[0,1]^2 int_[0,1]^2+delta |x-y|^(-2-s)."""
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    total = np.zeros(np.broadcast(d1, d2).shape)
    for i in (-1, 0):
        si = 1.0 if i == -1 else -1.0
        a1 = 1.0 - si * d1
        for j in (-1, 0):
            sj = 1.0 if j == -1 else -1.0
            a2 = 1.0 - sj * d2
            x0 = d1 + i
            y0 = d2 + j
            coeffs = {(0, 0): a1 * a2, (1, 0): si * a2, (0, 1): a1 * sj, (1, 1): si * sj}
            for (a, b), cab in coeffs.items():
                cab = np.broadcast_to(cab, total.shape)
                if not np.any(cab):
                    continue
                m = _square_moment(np.broadcast_to(x0, total.shape), np.broadcast_to(y0, total.shape), a, b, s)
                with np.errstate(invalid="ignore"):
                    total += np.where(cab != 0, cab * m, 0.0)
    return total


def far_cell_kernel(d1, d2, s):
    """Moment expansion of W for well separated cells, with error estimate.

    W(delta) = E f(delta + Z) with f = |.|^(-2-s) and Z the difference of two
    uniform points of a unit cell; expanded to fourth order in 1/|delta|.
    """
    x2 = np.asarray(d1, dtype=float) ** 2
    y2 = np.asarray(d2, dtype=float) ** 2
    r2 = x2 + y2
    p = 2.0 + s
    base = r2 ** (-p / 2)
    second = p * p / (12.0 * r2)
    quart = (2 * p * p + 3 * p - 3) * (x2 * x2 + y2 * y2) + (5 * p * p + 16 * p + 18) * x2 * y2
    fourth = p * (p + 2) * quart / (720.0 * r2 ** 4)
    val = base * (1.0 + second + fourth)
    err = base * np.abs(fourth) * (p + 4) ** 2 / r2
    return val, err


@lru_cache(maxsize=8)
def cell_kernel_table(s, ny, nx):
    """W over offsets (-(ny-1)..ny-1) x (-(nx-1)..nx-1); centre entry 0.

    Returns (table, error_table); entries are dimensionless (multiply by
    h^(2-s)).
    """
    dy = np.arange(-(ny - 1), ny)
    dx = np.arange(-(nx - 1), nx)
    D2, D1 = np.meshgrid(dy, dx, indexing="ij")
    with np.errstate(divide="ignore", invalid="ignore"):
        val, err = far_cell_kernel(D1, D2, s)
    near = (np.abs(D1) <= NEAR_RANGE) & (np.abs(D2) <= NEAR_RANGE) & ~((D1 == 0) & (D2 == 0))
    # exact values on the first octant, mapped by symmetry
    R = min(NEAR_RANGE, max(nx, ny))
    aa, bb = np.meshgrid(np.arange(R + 1), np.arange(R + 1), indexing="ij")
    mask = (aa >= bb) & ~((aa == 0) & (bb == 0))
    vals = exact_cell_kernel(aa[mask], bb[mask], s)
    tab = np.zeros((R + 1, R + 1))
    tab[aa[mask], bb[mask]] = vals
    tab = np.maximum(tab, tab.T)
    A1 = np.abs(D1[near])
    A2 = np.abs(D2[near])
    val = val.copy()
    val[near] = tab[A1, A2]
    err = np.where(near, 0.0, err)
    centre = (D1 == 0) & (D2 == 0)
    val[centre] = 0.0
    err[centre] = 0.0
    for arr in (val, err):
        arr.setflags(write=False)
    return val, err


def pair_counts(A_bits, B_bits):
    """C[delta] = #{x in A : x + delta in B} over all offsets, exact integers."""
    A = np.asarray(A_bits, dtype=float)
    B = np.asarray(B_bits, dtype=float)
    if not A.any() or not B.any():
        return np.zeros((2 * A.shape[0] - 1, 2 * A.shape[1] - 1), dtype=np.int64)
    c = signal.fftconvolve(B, A[::-1, ::-1], mode="full")
    return np.rint(c).astype(np.int64)


def grid_interaction(A, B, s, counts=None):
    """Exact L_s between two pixel sets sharing a frame. Returns (value, err)."""
    if not A.same_frame(B):
        raise DomainError("grid sets must share origin, cell size and shape")
    if np.any(A.bits & B.bits):
        raise OverlapError("grid sets share cells")
    C = pair_counts(A.bits, B.bits) if counts is None else counts
    W, E = cell_kernel_table(float(s), A.height, A.width)
    scale = A.h ** (2.0 - s)
    return scale * float(np.sum(W * C)), scale * float(np.sum(E * C))


# ---------------------------------------------------------------------------
# exterior of a rectangle


def _cos_power_integral(alpha, s):
    """int_0^alpha cos^s(phi) dphi for alpha in [0, pi/2]."""
    return 0.5 * special.beta(0.5, 0.5 * (s + 1)) * special.betainc(0.5, 0.5 * (s + 1), np.sin(alpha) ** 2)


def box_exterior_kernel(points, box, s):
    """int over the complement of ``box`` of |x - y|^(-2-s) dy, x inside box."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    x, y = p[:, 0], p[:, 1]
    total = np.zeros(p.shape[0])
    # (distance to edge, lengths along the edge on either side of the foot)
    edges = (
        (x - box.xmin, y - box.ymin, box.ymax - y),
        (box.xmax - x, y - box.ymin, box.ymax - y),
        (y - box.ymin, x - box.xmin, box.xmax - x),
        (box.ymax - y, x - box.xmin, box.xmax - x),
    )
    for d, l1, l2 in edges:
        g = _cos_power_integral(np.arctan2(l1, d), s) + _cos_power_integral(np.arctan2(l2, d), s)
        total += d ** (-s) * g
    return total / s


def cell_average(fn, grid_shape, origin, h, cells, order=4):
    """Average of fn(points) over the listed cells (rows of (i, j))."""
    x, w = qd.gauss_legendre(order)
    cells = np.asarray(cells)
    ox = origin[0] + (cells[:, 1, None, None] + x[None, :, None]) * h
    oy = origin[1] + (cells[:, 0, None, None] + x[None, None, :]) * h
    pts = np.stack(np.broadcast_arrays(ox, oy), axis=-1).reshape(-1, 2)
    vals = fn(pts).reshape(cells.shape[0], order, order)
    return np.einsum("nij,i,j->n", vals, w, w)


# ---------------------------------------------------------------------------
# dispatch


def _adaptive(fn, quad, max_level=None):
    top = quad.max_subdivision_depth if max_level is None else max_level
    prev = fn(0)
    val, err = prev, math.inf
    for level in range(1, top + 1):
        val = fn(level)
        err = abs(val - prev)
        if err <= quad.tolerance(val):
            return val, err
        prev = val
    raise ToleranceNotMet(f"achieved {err:.3g} after {top} refinements", val, err)


def interaction_quad(A, B, params, quad=None):
    """L_s(A, B) by quadrature. Returns (value, error_estimate)."""
    quad = quad or QuadratureSpec()
    s = params.s
    if is_empty(A) or is_empty(B):
        return 0.0, 0.0
    if isinstance(A, IntervalSet) or isinstance(B, IntervalSet):
        if params.n != 1:
            raise DomainError("interval sets live in n = 1")
        if A.intersect(B).measure > 0:
            raise OverlapError("sets overlap on a set of positive measure")
        if not len(A) or not len(B):
            return 0.0, 0.0
        if not A.bounded:
            if not B.bounded:
                return math.inf, 0.0
            A, B = B, A
        return _adaptive(lambda lv: _interaction_1d_quad(A, B, s, lv), quad, max(quad.max_subdivision_depth, 3))
    if params.n != 2:
        raise DomainError("planar sets live in n = 2")
    if isinstance(A, GridSet) and isinstance(B, GridSet):
        return grid_interaction(A, B, s)
    if isinstance(A, GridSet):
        return _adaptive(lambda lv: _interaction_grid_shape(A, B, s, lv), quad)
    if isinstance(B, GridSet):
        return _adaptive(lambda lv: _interaction_grid_shape(B, A, s, lv), quad)
    if not A.bounded or A.bbox() is None:
        if B.bounded and B.bbox() is not None:
            A, B = B, A
        else:
            raise DomainError("at least one set must be bounded")
    return _adaptive(lambda lv: _interaction_2d_rays(A, B, s, lv), quad)
