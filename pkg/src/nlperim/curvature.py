"""Fractional mean curvature I_s[E](x) = PV int (chi_E - chi_{complement E})(y) |x - y|^(-n-s) dy.

Along a ray x + t theta the signed kernel integrates in closed form, so the
curvature is an angular integral. For x on a C^2 boundary exactly half of the
directions start inside E; the divergent rho^(-s) terms of inward and outward
rays then cancel and the limit equals the finite part

    I = int_theta 2 sum_i (Phi(a_i) - Phi(b_i)) dtheta,   Phi(t) = t^(-s)/s, Phi(0) := 0,

over the E-intervals [a_i, b_i] of each ray. Near tangent directions the
integrand blows up like |theta - theta_t|^(-s); angular panels end at those
directions and carry Gauss-Jacobi end rules.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import kernel as K
from . import quadrature as qd
from . import rays
from .errors import DomainError, NoCancellation, NotOnBoundary, RegularityError
from .geometry import (
    Ball,
    Box,
    Complement,
    HalfSpace,
    Intersection,
    Subgraph,
    union,
)
from .perimeter import s_perimeter


@dataclass
class CurvatureResult:
    value: float
    pv_trace: list = field(default_factory=list)  # (rho, I_s^rho), rho decreasing
    cauchy_gap: float = 0.0
    error: float = 0.0

    def to_json(self):
        return json.dumps(
            {
                "value": self.value,
                "error": self.error,
                "cauchy_gap": self.cauchy_gap,
                "pv_trace": [[float(r), float(v)] for r, v in self.pv_trace],
            }
        )


def _phi(t, s):
    return rays.power_antiderivative(t, s)


def _ray_values(E, x, theta, s, rho=None, window=None, outward=None, snap=1e-9, ghost=1e-6):
    """Signed radial integral along each ray; finite part if rho is None.

    x is only known to round-off, so near tangent directions a ray may pick up
    a spurious chord of length ~sqrt(eps) or start at ~eps. ``outward`` marks
    rays in panels that leave E; their chords starting at 0 and shorter than
    ``ghost`` are dropped, and starts below ``snap`` are moved to 0.
    """
    origins = np.broadcast_to(x, (theta.size, 2))
    dirs = rays.directions(theta)
    st, en = E.ray_intervals(origins, dirs)
    st = np.where(st < snap, 0.0, st)
    if outward is not None:
        bad = outward[:, None] & (st == 0.0) & (en < ghost)
        st = np.where(bad, np.inf, st)
        en = np.where(bad, np.inf, en)
    if window is not None:
        ws, we = window.ray_intervals(origins, dirs)
        st, en = rays.intersect(st, en, ws, we)
        t_exit = np.where(np.isfinite(ws[:, 0]), we[:, 0], 0.0)
    else:
        t_exit = np.full(theta.size, np.inf)
    if rho is None:
        return 2.0 * (_phi(st, s) - _phi(en, s)).sum(axis=1) + _phi(t_exit, s)
    a = np.maximum(st, rho)
    b = np.maximum(en, rho)
    inner = 2.0 * (_phi(a, s) - _phi(b, s)).sum(axis=1)
    return inner - _phi(np.asarray(rho), s) + _phi(np.maximum(t_exit, rho), s)


def _angular_nodes(E, x, s, level, window=None, scale=1.0):
    crit = E.critical_angles(x[None])
    if window is not None:
        crit = np.concatenate([crit, window.critical_angles(x[None])], axis=1)
    # fixed quarter breaks too close to a critical angle would leave sliver
    # panels whose midpoint ray misreads the panel orientation
    crit = np.unique(np.mod(crit.ravel(), K.TWO_PI))
    base = np.arange(4) * (K.TWO_PI / 4)
    gap = np.abs(np.mod(base[:, None] - crit[None, :] + np.pi, K.TWO_PI) - np.pi).min(axis=1)
    ang = np.unique(np.concatenate([crit, base[gap > 1e-3]]))
    br = np.append(ang, ang[0] + K.TWO_PI)
    n = 8 + 4 * level
    levels = 6 + 2 * level
    th, w, _, _ = qd.two_sided_rule(br[:-1], br[1:], True, True, n, s, levels)
    # panel orientation from its midpoint ray
    mid = 0.5 * (br[:-1] + br[1:])
    st, en = E.ray_intervals(np.broadcast_to(x, (mid.size, 2)), rays.directions(mid))
    outward = ~((st[:, 0] < 1e-9 * scale) & (en[:, 0] > 1e-6 * scale))
    outward = np.repeat(outward, th.shape[1])
    return th.ravel(), w.ravel(), outward


def _pv_integral(E, x, s, level, rho=None, window=None, scale=1.0):
    th, w, outward = _angular_nodes(E, x, s, level, window, scale)
    vals = _ray_values(E, x, th, s, rho, window, outward, 1e-9 * scale, 1e-6 * scale)
    return float(np.dot(w, vals))


def _local_size(E, x):
    if isinstance(E, Ball):
        return E.radius
    if isinstance(E, Subgraph):
        return E.radius
    bb = E.bbox() if hasattr(E, "bbox") else None
    if bb is not None:
        return 0.5 * max(bb[2] - bb[0], bb[3] - bb[1])
    return 1.0


def _check_boundary(E, x, scale):
    d = float(E.signed_distance(np.atleast_2d(x))[0])
    if not abs(d) <= 1e-9 * max(scale, 1.0):
        raise NotOnBoundary(f"point is at signed distance {d:.3g} from the boundary")


def fmc_pv(E, x, params, quad=None, analytic=True, window=None, r_loc=None, check_cancellation=True):
    """Fractional mean curvature of E at the boundary point x.

    ``window`` restricts the integral to a bounded region (the cylinder K_r of
    the graph formula). For half-spaces the analytic path returns 0 exactly.
    """
    quad = quad or K.QuadratureSpec()
    if params.n != 2:
        raise DomainError("curvature is implemented for n = 2")
    s = params.s
    x = np.asarray(x, dtype=float)
    r_loc = _local_size(E, x) if r_loc is None else r_loc
    _check_boundary(E, x, r_loc)
    radii = [r_loc * r for r in quad.pv_radii]
    if analytic and isinstance(E, HalfSpace) and window is None:
        return CurvatureResult(0.0, [(r, 0.0) for r in radii], 0.0, 0.0)
    prev = _pv_integral(E, x, s, 0, window=window, scale=r_loc)
    val, err = prev, math.inf
    for level in range(1, quad.max_subdivision_depth + 1):
        val = _pv_integral(E, x, s, level, window=window, scale=r_loc)
        err = abs(val - prev)
        if err <= quad.tolerance(val):
            break
        prev = val
    trace_level = min(level + 1, quad.max_subdivision_depth + 1)
    trace = [(r, _pv_integral(E, x, s, trace_level, rho=r, window=window, scale=r_loc)) for r in radii]
    vals = np.array([v for _, v in trace])
    gaps = np.abs(np.diff(vals))
    gap = float(gaps[-3:].max()) if gaps.size else 0.0
    if check_cancellation and gaps.size >= 2 and not gaps[-1] < gaps[0] and gaps[0] > quad.tolerance(val):
        raise NoCancellation("principal-value trace does not settle")
    return CurvatureResult(val, trace, gap, err)


def ball_curvature_closed_form(s, radius=1.0):
    """I_s of a planar disc at any boundary point (used as an oracle)."""
    c = -(2.0 ** (1 - s) / s) * math.sqrt(math.pi) * math.gamma((1 - s) / 2) / math.gamma(1 - s / 2)
    return c * radius ** (-s)


# ---------------------------------------------------------------------------
# graph formula


def _graph_inner(a, s):
    """int_0^a (1 + t^2)^(-(2+s)/2) dt, odd in a."""
    p = (2.0 + s) / 2.0
    return a * special.hyp2f1(0.5, p, 1.5, -a * a)


def holder_exponent(du, r, samples=64):
    """Crude Hoelder exponent of du at 0 from a log-log fit of |du(y) - du(0)|."""
    y = r * np.geomspace(1e-4, 0.5, samples)
    d = np.abs(np.concatenate([du(y), du(-y)]) - du(np.zeros(1))[0])
    yy = np.concatenate([y, y])
    ok = d > 1e-300
    if ok.sum() < 4:
        return math.inf
    slope = np.polyfit(np.log(yy[ok]), np.log(d[ok]), 1)[0]
    return float(slope)


def fmc_graph_local(u, params, r=None, n_nodes=32, levels=10):
    """Cylinder contribution of a subgraph {y2 < u(y1)} to I_s at the origin.

    ``u`` is a Subgraph (its radius is r) or a pair (callable u, derivative).
    """
    s = params.s
    if isinstance(u, Subgraph):
        r = u.radius if r is None else r
        fn, du = u.u, u.du
    else:
        fn, du = u
        if r is None:
            raise DomainError("radius required for callable graphs")
    if abs(fn(np.zeros(1))[0]) > 1e-14 or abs(du(np.zeros(1))[0]) > 1e-12:
        raise DomainError("graph must satisfy u(0) = 0 and u'(0) = 0")
    alpha = holder_exponent(du, r)
    if not alpha > s:
        raise RegularityError(f"estimated Hoelder exponent {alpha:.3g} does not exceed s")
    total = 0.0
    for sign in (1.0, -1.0):
        y, w, da, _ = qd.two_sided_rule(0.0, r, True, False, n_nodes, s, levels)
        yy = sign * y
        a = fn(yy) / da
        total += float(np.dot(w, _graph_inner(a, s) * da ** (-(1.0 + s))))
    return 2.0 * total


# ---------------------------------------------------------------------------
# asymptotics and diagnostics


def fmc_asymptotic_scan(E, x, s_list, quad=None):
    """Rows (s, (1-s) I_s, |target|) with target (n-1) omega_{n-1} H = 2 H in the plane."""
    if isinstance(E, Ball):
        H = 1.0 / E.radius
    elif isinstance(E, HalfSpace):
        H = 0.0
    elif isinstance(E, Subgraph):
        H = abs(2.0 * E.coeffs[2]) / (1.0 + E.du(np.asarray([x[0]]))[0] ** 2) ** 1.5
    else:
        raise DomainError("mean curvature target needs a ball, half-space or graph")
    target = K.omega(1) * H
    rows = []
    for s in s_list:
        res = fmc_pv(E, x, K.FracParams(2, float(s)), quad, check_cancellation=False)
        rows.append((float(s), (1 - s) * res.value, target))
    return rows


def _cell_pv_table(s, R):
    """Integral of |y|^(-2-s) over unit cells outside B_1, for cells whose centres
    sit at (k + 1/2, m) from an edge midpoint (vertical edge)."""
    ks = np.arange(-R, R)
    ms = np.arange(-R, R + 1)
    KK, MM = np.meshgrid(ks, ms, indexing="ij")
    cx = KK + 0.5
    cy = MM.astype(float)
    x0 = cx - 0.5
    y0 = cy - 0.5
    tab = _cell_outside_unit_ball(x0.ravel(), y0.ravel(), s).reshape(KK.shape)
    return tab.T  # rows: vertical offset m; columns: horizontal offset k


def _cell_outside_unit_ball(x0, y0, s, n=24):
    """int over [x0,x0+1]x[y0,y0+1] minus B_1 of |y|^(-2-s), vectorised."""
    out = np.zeros(x0.shape)
    xg, wg = qd.gauss_legendre(n)
    for i in range(x0.size):
        cs = np.array([[x0[i], y0[i]], [x0[i] + 1, y0[i]], [x0[i] + 1, y0[i] + 1], [x0[i], y0[i] + 1]])
        box = Box(x0[i], y0[i], x0[i] + 1, y0[i] + 1)
        contains_origin = x0[i] < 0 < x0[i] + 1 and y0[i] < 0 < y0[i] + 1
        if contains_origin:
            br = np.sort(np.mod(np.arctan2(cs[:, 1], cs[:, 0]), 2 * np.pi))
            br = np.concatenate([br, br[:1] + 2 * np.pi])
        else:
            nonzero = np.hypot(cs[:, 0], cs[:, 1]) > 0
            ang = np.arctan2(cs[nonzero, 1], cs[nonzero, 0])
            ref = math.atan2(y0[i] + 0.5, x0[i] + 0.5)
            ang = np.mod(ang - ref + np.pi, 2 * np.pi) - np.pi + ref
            br = np.sort(ang)
        # also break where the unit circle meets the cell
        extra = []
        for p, q in zip(cs, np.roll(cs, -1, axis=0)):
            d = q - p
            A = d @ d
            B = 2 * d @ p
            C = p @ p - 1.0
            disc = B * B - 4 * A * C
            if disc > 0:
                for t in ((-B - math.sqrt(disc)) / (2 * A), (-B + math.sqrt(disc)) / (2 * A)):
                    if 0 <= t <= 1:
                        pt = p + t * d
                        extra.append(math.atan2(pt[1], pt[0]))
        if extra:
            lo, hi = br[0], br[-1]
            ex = np.asarray(extra)
            ex = np.where(ex < lo, ex + 2 * np.pi, ex)
            ex = np.where(ex > hi, ex - 2 * np.pi, ex)
            br = np.sort(np.concatenate([br, ex[(ex >= lo) & (ex <= hi)]]))
        width = np.diff(br)
        phi = (br[:-1, None] + width[:, None] * xg).ravel()
        w = (width[:, None] * wg).ravel()
        U = rays.directions(phi)
        st, en = box.ray_intervals(np.zeros_like(U), U)
        a = np.maximum(st[:, 0], 1.0)
        b = np.maximum(en[:, 0], 1.0)
        ok = np.isfinite(st[:, 0])
        val = np.where(ok, _phi(a, s) - _phi(b, s), 0.0)
        out[i] = float(np.dot(w, val))
    return out


_PV_TABLE_CACHE = {}


def _pv_table(s, R):
    key = (float(s), int(R))
    if key not in _PV_TABLE_CACHE:
        near = _cell_pv_table(s, min(R, 12))
        tab = _far_pv_table(s, R)
        rn = min(R, 12)
        cy, cx = tab.shape[0] // 2, tab.shape[1] // 2
        tab[cy - rn : cy + rn + 1, cx - rn : cx + rn] = near
        _PV_TABLE_CACHE[key] = tab
    return _PV_TABLE_CACHE[key]


def _far_pv_table(s, R):
    ks = np.arange(-R, R) + 0.5
    ms = np.arange(-R, R + 1).astype(float)
    MM, KK = np.meshgrid(ms, ks, indexing="ij")
    r2 = KK ** 2 + MM ** 2
    p = 2.0 + s
    return r2 ** (-p / 2) * (1.0 + p * p / (24.0 * r2))


def euler_lagrange_residual(E, omega=None, params=None, quad=None, exterior=None):
    """I_s^{rho=h} at the midpoints of interface edges of a pixel set.

    Cells outside the frame belong to ``exterior`` (an analytic shape) or to
    the complement when ``exterior`` is None. Returns (max_abs, records) with
    records (x, y, value) for edges whose midpoint lies in omega.
    """
    params = params or K.FracParams(2, 0.5)
    s = params.s
    h = E.h
    H, W = E.bits.shape
    R = max(H, W)
    tab = _pv_table(s, R)  # rows m in [-R, R], cols k in [-R, R)
    sign = 2.0 * E.bits.astype(float) - 1.0
    from scipy.signal import fftconvolve

    x0, y0 = E.origin
    frame = Box(*E.bbox)
    records = []
    # vertical edges at x = x0 + j h, j = 1..W-1, between rows
    conv_v = fftconvolve(sign, tab[::-1, ::-1], mode="full")
    conv_h = fftconvolve(sign, tab.T[::-1, ::-1], mode="full")
    vi, vj = np.nonzero(E.bits[:, 1:] != E.bits[:, :-1])
    vj = vj + 1
    hi_, hj = np.nonzero(E.bits[1:, :] != E.bits[:-1, :])
    hi_ = hi_ + 1
    pts, vals = [], []
    if vi.size:
        # edge midpoint at column boundary j, row i; cell (i', j') offset: k = j' - j, m = i' - i
        # conv index: full conv of sign with flipped tab at (i + R, j + R - 1)
        v = conv_v[vi + R, vj + R - 1]
        pts.append(np.stack([x0 + vj * h, y0 + (vi + 0.5) * h], axis=1))
        vals.append(v)
    if hi_.size:
        v = conv_h[hi_ + R - 1, hj + R]
        pts.append(np.stack([x0 + (hj + 0.5) * h, y0 + hi_ * h], axis=1))
        vals.append(v)
    if not pts:
        return 0.0, []
    P = np.concatenate(pts)
    V = np.concatenate(vals) * h ** (-s)
    outside = K.box_exterior_kernel(P, frame, s)
    if exterior is not None:
        ext_part = K.ray_kernel_integral(Intersection((exterior, Complement(frame))), P, s, n_theta=24)
        V = V + 2.0 * ext_part - outside
    else:
        V = V - outside
    keep = np.ones(P.shape[0], dtype=bool) if omega is None else omega.contains(P)
    records = [(float(p[0]), float(p[1]), float(v)) for p, v in zip(P[keep], V[keep])]
    max_abs = float(np.abs(V[keep]).max()) if keep.any() else 0.0
    return max_abs, records


def first_variation_check(E, field, s, t_list=(0.02, 0.01), quad=None, n_boundary=32):
    """Compare d/dt P_s(Phi_t(E)) at t = 0 with -int_{dE} I_s nu . field.

    ``field`` is "dilation", "rotation" or a translation vector. Returns
    (lhs, rhs, gap); lhs is a Richardson-extrapolated centred difference.
    """
    if not isinstance(E, Ball):
        raise DomainError("first variation check is implemented for discs")
    quad = quad or K.QuadratureSpec()
    params = K.FracParams(2, s)

    def deformed(t):
        if field == "dilation":
            c = np.asarray(E.center)
            return Ball(tuple((1 + t) * c), (1 + t) * E.radius)
        if field == "rotation":
            c = np.asarray(E.center)
            rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
            return Ball(tuple(rot @ c), E.radius)
        v = np.asarray(field, dtype=float)
        return E.translated(t * v)

    def perim(t):
        return s_perimeter(deformed(t), None, params, quad).total

    diffs = [(perim(t) - perim(-t)) / (2 * t) for t in t_list]
    lhs = diffs[-1]
    if len(diffs) >= 2:
        r = t_list[0] / t_list[1]
        lhs = diffs[-1] + (diffs[-1] - diffs[-2]) / (r * r - 1)
    # boundary quadrature: periodic trapezoid
    ang = 2 * np.pi * np.arange(n_boundary) / n_boundary
    nu = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    pts = np.asarray(E.center) + E.radius * nu
    if field == "dilation":
        phi = pts
    elif field == "rotation":
        phi = np.stack([-pts[:, 1], pts[:, 0]], axis=1)
    else:
        phi = np.broadcast_to(np.asarray(field, dtype=float), pts.shape)
    normal_speed = np.einsum("ij,ij->i", nu, phi)
    if np.allclose(normal_speed, 0.0):
        rhs = 0.0
    else:
        curv = np.array([fmc_pv(E, p, params, quad, check_cancellation=False).value for p in pts])
        rhs = -float(np.sum(curv * normal_speed)) * (2 * np.pi * E.radius / n_boundary)
    return lhs, rhs, abs(lhs - rhs)


def c1alpha_distance(du_a, du_b, u_a, u_b, alpha, r=1.0, samples=2001):
    """Discrete C^{1,alpha}(B'_r) distance between two graphs."""
    y = np.linspace(-r, r, samples)
    d0 = np.abs(u_a(y) - u_b(y)).max()
    g = du_a(y) - du_b(y)
    d1 = np.abs(g).max()
    idx = np.arange(0, samples, max(1, samples // 200))
    yy = y[idx]
    gg = g[idx]
    dy = np.abs(yy[:, None] - yy[None, :])
    dg = np.abs(gg[:, None] - gg[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        hol = np.where(dy > 0, dg / dy ** alpha, 0.0).max()
    return float(d0 + d1 + hol)


def _symdiff_outside_cylinder(Ea, Eb, r, extent=12.0, m=1601):
    """Measure of (Ea sym-diff Eb) outside (-r, r)^2 by a midpoint grid on [-extent, extent]^2."""
    g = (np.arange(m) + 0.5) / m * 2 * extent - extent
    X, Y = np.meshgrid(g, g)
    P = np.stack([X.ravel(), Y.ravel()], axis=1)
    outside = (np.abs(P[:, 0]) >= r) | (np.abs(P[:, 1]) >= r)
    diff = Ea.contains(P) != Eb.contains(P)
    return float((diff & outside).sum()) * (2 * extent / m) ** 2


def splice(E, sub):
    """Set equal to ``sub`` inside the cylinder of E and to E outside it."""
    cyl = E.cylinder()
    return union(Intersection((sub, cyl)), Intersection((E, Complement(cyl))))


def curvature_continuity_check(E, seq, params, quad=None, slack=2.0):
    """Check |I_s[E_k](0) - I_s[E](0)| <= C (||u - u_k||_{C^{1,alpha}} + tail_k / r^(n+s)).

    ``E`` is a Subgraph. Items of ``seq`` are Subgraphs, spliced into E inside
    the cylinder of E, or ("far", shape) pairs adding ``shape`` (disjoint from
    the cylinder) to E. C is fitted on the first item (times ``slack``) and
    reused for the rest.
    """
    s = params.s
    r = E.radius
    alpha = 0.5 * (1.0 + s)
    origin = (0.0, 0.0)
    base = fmc_pv(E, origin, params, quad, check_cancellation=False, r_loc=r).value
    rows = []
    for item in seq:
        if isinstance(item, tuple):
            Ek = union(E, item[1])
            dist = 0.0
            tail = _symdiff_outside_cylinder(E, Ek, r)
        else:
            Ek = splice(E, item)
            dist = c1alpha_distance(E.du, item.du, E.u, item.u, alpha, r)
            tail = 0.0
        val = fmc_pv(Ek, origin, params, quad, check_cancellation=False, r_loc=r).value
        rows.append({"c1alpha": dist, "tail": tail, "gap": abs(val - base)})
    C = None
    for row in rows:
        unit = row["c1alpha"] + row["tail"] / r ** (2 + s)
        if C is None and unit > 0:
            C = slack * row["gap"] / unit
        row["bound"] = (C or 0.0) * unit
        row["ok"] = bool(row["gap"] <= row["bound"] + 1e-9 * (1 + abs(base)))
    return {"C": C, "rows": rows, "ok": all(row["ok"] for row in rows)}
