"""Fractional perimeter P_s(E, Omega), its local/nonlocal split and the s -> 1 scans."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel as K
from . import rays
from .errors import DegenerateSet, DomainError
from .geometry import (
    Ball,
    Box,
    Complement,
    EmptySet,
    GridSet,
    HalfSpace,
    Intersection,
    IntervalSet,
    KochApproximation,
    Polygon,
    Subgraph,
    band,
    is_empty,
    rasterize,
)


@dataclass(frozen=True)
class SPerimeterBreakdown:
    local: float
    nonlocal_: float
    error: float = 0.0

    @property
    def total(self):
        return self.local + self.nonlocal_

    def to_dict(self):
        return {"local": self.local, "nonlocal": self.nonlocal_, "total": self.total, "error": self.error}


@dataclass
class AsymptoticTable:
    rows: list = field(default_factory=list)  # (s, scaled_value, target, error)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "scaled_value", "target", "error"])
        for r in self.rows:
            w.writerow([repr(float(v)) for v in r])
        return buf.getvalue()


# ---------------------------------------------------------------------------
# 1D


def s_perimeter_global_1d(E, s):
    """Exact P_s(E) = L_s(E, complement of E) for a bounded interval union."""
    if not E.bounded:
        raise DomainError("E must be bounded")
    if not len(E):
        return 0.0
    return K.interval_interaction(E, E.complement(), s)


def _s_perimeter_1d(E, omega, s):
    if omega is None:
        return SPerimeterBreakdown(s_perimeter_global_1d(E, s), 0.0)
    cE = E.complement()
    cO = omega.complement()
    local = K.interval_interaction(E.intersect(omega), cE.intersect(omega), s)
    nl = K.interval_interaction(E.intersect(omega), cE.intersect(cO), s)
    nl += K.interval_interaction(E.intersect(cO), cE.intersect(omega), s)
    return SPerimeterBreakdown(local, nl)


# ---------------------------------------------------------------------------
# planar analytic sets


def _meet(a, b):
    if is_empty(a) or is_empty(b):
        return EmptySet()
    return Intersection((a, b))


def _s_perimeter_shapes(E, omega, params, quad):
    cE = Complement(E)
    if omega is None:
        v, e = K.interaction_quad(E, cE, params, quad)
        return SPerimeterBreakdown(v, 0.0, e)
    cO = Complement(omega)
    local, e1 = K.interaction_quad(_meet(E, omega), _meet(cE, omega), params, quad)
    n1, e2 = K.interaction_quad(_meet(E, omega), _meet(cE, cO), params, quad)
    n2, e3 = K.interaction_quad(_meet(E, cO), _meet(cE, omega), params, quad)
    return SPerimeterBreakdown(local, n1 + n2, e1 + e2 + e3)


# ---------------------------------------------------------------------------
# pixel sets


def frame_exterior(grid, cells, s, order=6):
    """int over cells of int outside the grid frame of the kernel, per cell."""
    if len(cells) == 0:
        return np.zeros(0), 0.0
    frame = Box(*grid.bbox)
    fn = lambda p: K.box_exterior_kernel(p, frame, s)  # noqa: E731
    hi = K.cell_average(fn, grid.bits.shape, grid.origin, grid.h, cells, order=order)
    lo = K.cell_average(fn, grid.bits.shape, grid.origin, grid.h, cells, order=max(2, order // 2))
    area = grid.h ** 2
    return area * hi, area * float(np.abs(hi - lo).sum())


def _omega_mask(grid, omega):
    if omega is None:
        return np.ones(grid.bits.shape, dtype=bool)
    if isinstance(omega, GridSet):
        if not omega.same_frame(grid):
            raise DomainError("Omega mask must share the grid frame")
        return omega.bits
    x0, y0, x1, y1 = grid.bbox
    bb = omega.bbox()
    tol = 1e-9 * grid.h
    if bb is None or bb[0] < x0 - tol or bb[1] < y0 - tol or bb[2] > x1 + tol or bb[3] > y1 + tol:
        raise DomainError("Omega must lie inside the grid frame")
    return rasterize(omega, grid.bbox, grid.h).bits


def _s_perimeter_grid(E, omega, params, counts_cache=None):
    s = params.s
    inside = _omega_mask(E, omega)
    bits = E.bits
    a = E.with_bits(bits & inside)
    b = E.with_bits(~bits & inside)
    local, err = K.grid_interaction(a, b, s)
    cells = np.argwhere(bits & inside)
    ext, ext_err = frame_exterior(E, cells, s)
    if omega is None:
        return SPerimeterBreakdown(local + float(ext.sum()), 0.0, err + ext_err)
    n1, e1 = K.grid_interaction(a, E.with_bits(~bits & ~inside), s)
    n2, e2 = K.grid_interaction(E.with_bits(bits & ~inside), b, s)
    return SPerimeterBreakdown(local, n1 + n2 + float(ext.sum()), err + e1 + e2 + ext_err)


def s_perimeter(E, omega, params, quad=None):
    """P_s(E, Omega) split into local and nonlocal parts.

    ``omega=None`` means the whole space, in which case everything is local.
    """
    quad = quad or K.QuadratureSpec()
    if isinstance(E, IntervalSet):
        return _s_perimeter_1d(E, omega, params.s)
    if isinstance(E, KochApproximation):
        E = E.polygon()
    if is_empty(E):
        return SPerimeterBreakdown(0.0, 0.0)
    if isinstance(E, GridSet):
        return _s_perimeter_grid(E, omega, params)
    if omega is not None and (not omega.bounded or omega.bbox() is None):
        raise DomainError("Omega must be bounded")
    return _s_perimeter_shapes(E, omega, params, quad)


# ---------------------------------------------------------------------------
# classical perimeter


def _segment_length_inside(p, d, length, omega):
    """Length of the segment p + t d, t in [0, length], inside omega (|d| = 1)."""
    st, en = omega.ray_intervals(np.atleast_2d(p), np.atleast_2d(d))
    st, en = rays.clip(st, en, length)
    return float(rays.total_length(st, en)[0])


def classical_perimeter(E, omega=None):
    """Length of the boundary of E inside omega (count of jump points in 1D)."""
    if isinstance(E, IntervalSet):
        pts = [v for I in E for v in I if math.isfinite(v)]
        if omega is None:
            return float(len(pts))
        return float(np.count_nonzero(omega.contains(np.asarray(pts)))) if pts else 0.0
    if isinstance(E, GridSet):
        return _grid_interface_length(E, omega)
    if isinstance(E, KochApproximation):
        E = E.polygon()
    if isinstance(E, Ball):
        if omega is None:
            return E.perimeter_length
        m = 1 << 16
        t = (np.arange(m) + 0.5) * (2 * np.pi / m)
        pts = np.asarray(E.center) + E.radius * np.stack([np.cos(t), np.sin(t)], axis=1)
        return E.perimeter_length * float(omega.contains(pts).mean())
    if isinstance(E, (Polygon, Box)):
        v = E.array if isinstance(E, Polygon) else E.corners()
        e = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(e[:, 0], e[:, 1])
        if omega is None:
            return float(lengths.sum())
        return math.fsum(_segment_length_inside(v[k], e[k] / lengths[k], lengths[k], omega) for k in range(len(v)))
    if isinstance(E, HalfSpace):
        if omega is None or omega.bbox() is None:
            raise DomainError("a half-space boundary needs a bounded Omega")
        nu = np.asarray(E.normal)
        p0 = nu * E.offset
        tau = np.array([-nu[1], nu[0]])
        return _segment_length_inside(p0, tau, np.inf, omega) + _segment_length_inside(p0, -tau, np.inf, omega)
    if isinstance(E, Subgraph):
        if omega is None or omega.bbox() is None:
            raise DomainError("a graph boundary needs a bounded Omega")
        bb = omega.bbox()
        y = np.linspace(bb[0], bb[2], 200_001)
        pts = np.stack([y, E.u(y)], axis=1)
        mid = 0.5 * (pts[1:] + pts[:-1])
        seg = np.hypot(*np.diff(pts, axis=0).T)
        return float(seg[omega.contains(mid)].sum())
    raise TypeError(f"no classical perimeter for {type(E).__name__}")


def _grid_interface_length(E, omega=None):
    bits = np.pad(E.bits, 1)
    h = E.h
    x0, y0 = E.origin
    # vertical interfaces between column j-1 and j (padded indices)
    vi, vj = np.nonzero(bits[:, 1:] != bits[:, :-1])
    hi, hj = np.nonzero(bits[1:, :] != bits[:-1, :])
    if omega is None:
        return h * (vi.size + hi.size)
    vmid = np.stack([x0 + vj * h, y0 + (vi - 0.5) * h], axis=1)
    hmid = np.stack([x0 + (hj - 0.5) * h, y0 + hi * h], axis=1)
    mids = np.concatenate([vmid, hmid]) if vmid.size + hmid.size else np.zeros((0, 2))
    if isinstance(omega, GridSet):
        raise DomainError("use an analytic Omega for interface lengths")
    return h * float(np.count_nonzero(omega.contains(mids)))


# ---------------------------------------------------------------------------
# s -> 1 experiments

DEFAULT_S_LIST = (0.5, 0.7, 0.9, 0.95, 0.99, 0.999)


def asymptotic_scan(E, omega, s_list=DEFAULT_S_LIST, mode="total", n=None, quad=None, target_perimeter=None):
    """Rows (s, (1-s) * value, omega_{n-1} * P(E, Omega), error)."""
    s_arr = np.asarray(s_list, dtype=float)
    if s_arr.size == 0 or np.any(np.diff(s_arr) <= 0) or np.any((s_arr <= 0) | (s_arr >= 1)):
        raise DomainError("s_list must be increasing inside (0, 1)")
    if mode not in ("total", "local"):
        raise DomainError("mode must be 'total' or 'local'")
    if n is None:
        n = 1 if isinstance(E, IntervalSet) else 2
    if target_perimeter is None:
        src = E
        target_perimeter = classical_perimeter(src, omega)
    target = K.omega(n - 1) * target_perimeter
    table = AsymptoticTable()
    for s in s_arr:
        br = s_perimeter(E, omega, K.FracParams(n, float(s)), quad)
        val = br.local if mode == "local" else br.total
        table.rows.append((float(s), (1 - s) * val, target, (1 - s) * br.error))
    return table


def nonlocal_band_bound(E, omega, rho, params, quad=None):
    """2 P_s^L(E, N_rho(boundary of Omega)) + 4 n omega_n / s |Omega| rho^(-s)."""
    if not rho > 0:
        raise DegenerateSet("rho must be positive")
    T = band(omega, rho)
    local = s_perimeter(E, T, params, quad).local if not isinstance(E, IntervalSet) else _s_perimeter_1d(E, T, params.s).local
    area = _measure(omega)
    return 2.0 * local + 4.0 * K.tail_bound(area, rho, params)


def _measure(omega):
    if isinstance(omega, (IntervalSet, GridSet)):
        return omega.measure
    if isinstance(omega, (Ball, Box, Polygon)):
        return omega.area
    raise DomainError("Omega must be a ball, box, polygon or pixel set")
