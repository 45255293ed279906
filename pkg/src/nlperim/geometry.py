"""Set representations: 1D interval unions, pixel sets and analytic planar shapes.

Analytic shapes all answer three questions: membership of points, the
parameter intervals along rays (see :mod:`nlperim.rays`) and signed distance.
Everything downstream is written against that small surface.
"""
from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path as _MplPath
from scipy import ndimage

from . import rays
from .errors import DegenerateSet, DomainError, NonPositiveInterval, ResolutionError

MAX_CELLS = 4_000_000


# ---------------------------------------------------------------------------
# 1D


@dataclass(frozen=True)
class IntervalSet:
    """Finite disjoint union of open intervals of the real line.

    Endpoints may be infinite, which lets complements and half-lines live in
    the same type.
    """

    intervals: tuple = ()

    def __post_init__(self):
        prev = -math.inf
        for i, (a, b) in enumerate(self.intervals):
            if not a < b:
                raise NonPositiveInterval(f"interval {(a, b)} has left >= right")
            if i and not a > prev:
                raise DomainError("intervals must be disjoint with increasing endpoints")
            prev = b

    def __iter__(self):
        return iter(self.intervals)

    def __len__(self):
        return len(self.intervals)

    @property
    def measure(self):
        return math.fsum(b - a for a, b in self.intervals)

    @property
    def bounded(self):
        return all(math.isfinite(a) and math.isfinite(b) for a, b in self.intervals)

    def complement(self):
        out = []
        left = -math.inf
        for a, b in self.intervals:
            if a > left:
                out.append((left, a))
            left = b
        if left < math.inf:
            out.append((left, math.inf))
        return IntervalSet(tuple(out))

    def intersect(self, other):
        out = []
        i = j = 0
        A, B = self.intervals, other.intervals
        while i < len(A) and j < len(B):
            lo = max(A[i][0], B[j][0])
            hi = min(A[i][1], B[j][1])
            if lo < hi:
                out.append((lo, hi))
            if A[i][1] < B[j][1]:
                i += 1
            else:
                j += 1
        return IntervalSet(tuple(out))

    def difference(self, other):
        return self.intersect(other.complement())

    def union(self, other):
        return make_interval_set(list(self.intervals) + list(other.intervals))

    def scaled(self, lam):
        return IntervalSet(tuple((lam * a, lam * b) for a, b in self.intervals))

    def translated(self, x):
        return IntervalSet(tuple((a + x, b + x) for a, b in self.intervals))

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            out |= (x > a) & (x < b)
        return out

    def to_dict(self):
        return {"kind": "intervals", "intervals": [list(p) for p in self.intervals]}


def make_interval_set(raw):
    """Sort and merge a list of (left, right) pairs into an IntervalSet."""
    pairs = [(float(a), float(b)) for a, b in raw]
    for a, b in pairs:
        if not a < b:
            raise NonPositiveInterval(f"interval {(a, b)} has left >= right")
    pairs.sort()
    merged = []
    for a, b in pairs:
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return IntervalSet(tuple(merged))


def counterexample_set(a, K):
    """Union of (a^(2k+1), a^(2k)) for k = 1..K.

    For K -> inf this set has finite s-perimeter for every s in (0, 1) but
    infinitely many jumps, hence infinite classical perimeter.
    """
    if not 0.0 < a < 1.0:
        raise DomainError("a must lie in (0, 1)")
    if int(K) < 1:
        raise DomainError("K must be >= 1")
    return make_interval_set([(a ** (2 * k + 1), a ** (2 * k)) for k in range(1, int(K) + 1)])


# ---------------------------------------------------------------------------
# pixel sets


@dataclass(frozen=True, eq=False)
class GridSet:
    """Binary pixel set. ``bits[i, j]`` is the cell in row i (y) and column j (x);
    row 0 sits at ``origin[1]``."""

    bits: np.ndarray
    origin: tuple = (0.0, 0.0)
    h: float = 1.0

    def __post_init__(self):
        bits = np.ascontiguousarray(np.asarray(self.bits, dtype=bool))
        if bits.ndim != 2:
            raise DomainError("GridSet bits must be 2D")
        if not self.h > 0:
            raise DomainError("cell size must be positive")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "h", float(self.h))

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def measure(self):
        return self.h * self.h * int(self.bits.sum())

    @property
    def bbox(self):
        x0, y0 = self.origin
        return (x0, y0, x0 + self.width * self.h, y0 + self.height * self.h)

    def centers(self):
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.width) + 0.5) * self.h
        ys = y0 + (np.arange(self.height) + 0.5) * self.h
        return np.meshgrid(xs, ys)

    def with_bits(self, bits):
        return GridSet(bits, self.origin, self.h)

    def complement(self):
        return self.with_bits(~self.bits)

    def scaled(self, lam):
        return GridSet(self.bits, (lam * self.origin[0], lam * self.origin[1]), lam * self.h)

    def translated(self, v):
        return GridSet(self.bits, (self.origin[0] + v[0], self.origin[1] + v[1]), self.h)

    def same_frame(self, other):
        return (
            self.bits.shape == other.bits.shape
            and self.origin == other.origin
            and self.h == other.h
        )

    def cell_index(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        j = np.floor((points[:, 0] - self.origin[0]) / self.h).astype(int)
        i = np.floor((points[:, 1] - self.origin[1]) / self.h).astype(int)
        return i, j

    def contains(self, points):
        i, j = self.cell_index(points)
        ok = (i >= 0) & (i < self.height) & (j >= 0) & (j < self.width)
        out = np.zeros(i.shape, dtype=bool)
        out[ok] = self.bits[i[ok], j[ok]]
        return out

    def to_dict(self):
        packed = np.packbits(self.bits.ravel(), bitorder="little")
        return {
            "kind": "grid",
            "width": self.width,
            "height": self.height,
            "origin": list(self.origin),
            "h": self.h,
            "bits": base64.b64encode(packed.tobytes()).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, d):
        raw = np.frombuffer(base64.b64decode(d["bits"]), dtype=np.uint8)
        n = int(d["width"]) * int(d["height"])
        bits = np.unpackbits(raw, bitorder="little")[:n].astype(bool)
        return cls(bits.reshape(int(d["height"]), int(d["width"])), tuple(d["origin"]), float(d["h"]))


# ---------------------------------------------------------------------------
# analytic shapes


class Shape:
    """Planar set with ray-interval queries. Subclasses are immutable."""

    bounded = True

    def contains(self, points):
        raise NotImplementedError

    def ray_intervals(self, origins, dirs):
        raise NotImplementedError

    def signed_distance(self, points):
        raise NotImplementedError

    def outer_normal(self, point):
        raise NotImplementedError

    def bbox(self):
        return None

    def critical_angles(self, points):
        """Ray directions from each point at which the ray integrand has kinks.

        Returns an (N, k) array; used as panel breakpoints for angular rules.
        """
        return np.zeros((_as_points(points).shape[0], 0))

    def boundary_pieces(self):
        """Primitive boundary curves: ("line", p, d), ("seg", p, q), ("circle", c, r)."""
        return []

    def complement(self):
        return Complement(self)

    def __and__(self, other):
        return Intersection((self, other))

    def __sub__(self, other):
        return Intersection((self, Complement(other)))


class EmptySet(Shape):
    """The empty planar set."""

    def contains(self, points):
        return np.zeros(_as_points(points).shape[0], dtype=bool)

    def ray_intervals(self, origins, dirs):
        return rays.empty(origins.shape[0])

    def signed_distance(self, points):
        return np.full(_as_points(points).shape[0], np.inf)

    def scaled(self, lam):
        return self

    def translated(self, v):
        return self

    def to_dict(self):
        return {"kind": "empty"}


def is_empty(shape):
    if isinstance(shape, EmptySet):
        return True
    if isinstance(shape, Intersection):
        return any(is_empty(p) for p in shape.parts)
    if isinstance(shape, GridSet):
        return not shape.bits.any()
    if isinstance(shape, IntervalSet):
        return len(shape) == 0
    return False


def _as_points(points):
    return np.atleast_2d(np.asarray(points, dtype=float))


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def area(self):
        return math.pi * self.radius ** 2

    @property
    def perimeter_length(self):
        return 2 * math.pi * self.radius

    def contains(self, points):
        p = _as_points(points) - np.asarray(self.center)
        return np.einsum("ij,ij->i", p, p) < self.radius ** 2

    def ray_intervals(self, origins, dirs):
        p = origins - np.asarray(self.center)
        b = np.einsum("ij,ij->i", dirs, p)
        c = np.einsum("ij,ij->i", p, p) - self.radius ** 2
        # origins within round-off of the circle are treated as on it
        c = np.where(np.abs(c) <= 8 * np.finfo(float).eps * self.radius ** 2, 0.0, c)
        disc = b * b - c
        ok = disc > 0
        root = np.sqrt(np.where(ok, disc, 0.0))
        # stable pair of roots of t^2 + 2bt + c
        q = -(b + np.copysign(root, b))
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(q != 0, q, 0.0)
            t2 = np.where(q != 0, c / q, 0.0)
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        lo = np.where(ok, np.maximum(lo, 0.0), np.inf)
        hi = np.where(ok & (hi > 0), hi, np.inf)
        lo = np.where(np.isinf(hi), np.inf, lo)
        return lo[:, None], hi[:, None]

    def signed_distance(self, points):
        p = _as_points(points) - np.asarray(self.center)
        return np.hypot(p[:, 0], p[:, 1]) - self.radius

    def boundary_pieces(self):
        return [("circle", np.asarray(self.center), self.radius)]

    def outer_normal(self, point):
        v = np.asarray(point, dtype=float) - np.asarray(self.center)
        return v / np.hypot(*v)

    def critical_angles(self, points):
        p = _as_points(points) - np.asarray(self.center)
        d = np.hypot(p[:, 0], p[:, 1])
        to_c = np.arctan2(-p[:, 1], -p[:, 0])
        half = np.arcsin(np.clip(self.radius / np.maximum(d, 1e-300), 0.0, 1.0))
        # same on-circle snap as ray_intervals, else tangent breaks split off slivers
        on = np.abs(d * d - self.radius ** 2) <= 8 * np.finfo(float).eps * self.radius ** 2
        half = np.where(on, np.pi / 2, half)
        return np.stack([to_c - half, to_c + half, to_c - np.pi / 2, to_c + np.pi / 2], axis=1)

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)

    def scaled(self, lam):
        return Ball((lam * self.center[0], lam * self.center[1]), lam * self.radius)

    def translated(self, v):
        return Ball((self.center[0] + v[0], self.center[1] + v[1]), self.radius)

    def to_dict(self):
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class HalfSpace(Shape):
    """{x : x . normal <= offset} with a unit normal."""

    normal: tuple = (0.0, 1.0)
    offset: float = 0.0
    bounded = False

    def __post_init__(self):
        nu = np.asarray(self.normal, dtype=float)
        norm = float(np.hypot(*nu))
        if not abs(norm - 1.0) < 1e-12:
            raise DomainError("half-space normal must have unit length")
        object.__setattr__(self, "normal", (float(nu[0]), float(nu[1])))
        object.__setattr__(self, "offset", float(self.offset))

    def contains(self, points):
        return _as_points(points) @ np.asarray(self.normal) < self.offset

    def ray_intervals(self, origins, dirs):
        nu = np.asarray(self.normal)
        gap = self.offset - origins @ nu
        dn = dirs @ nu
        with np.errstate(divide="ignore", invalid="ignore"):
            cross = gap / dn
        inside = gap >= 0
        lo = np.where(inside, 0.0, np.where(dn < 0, cross, np.inf))
        hi = np.where(inside & (dn > 0), cross, np.inf)
        return rays.normalize(lo[:, None], hi[:, None])

    def signed_distance(self, points):
        return _as_points(points) @ np.asarray(self.normal) - self.offset

    def boundary_pieces(self):
        nu = np.asarray(self.normal)
        return [("line", nu * self.offset, np.array([-nu[1], nu[0]]))]

    def critical_angles(self, points):
        n = _as_points(points).shape[0]
        a = math.atan2(self.normal[1], self.normal[0])
        return np.tile([a - np.pi / 2, a + np.pi / 2], (n, 1))

    def outer_normal(self, point):
        return np.asarray(self.normal)

    def scaled(self, lam):
        return HalfSpace(self.normal, lam * self.offset)

    def translated(self, v):
        return HalfSpace(self.normal, self.offset + float(np.dot(self.normal, v)))

    def to_dict(self):
        return {"kind": "halfspace", "normal": list(self.normal), "offset": self.offset}


@dataclass(frozen=True)
class Box(Shape):
    """Axis-aligned open rectangle (xmin, ymin, xmax, ymax)."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise DomainError("degenerate box")

    @property
    def area(self):
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def contains(self, points):
        p = _as_points(points)
        return (p[:, 0] > self.xmin) & (p[:, 0] < self.xmax) & (p[:, 1] > self.ymin) & (p[:, 1] < self.ymax)

    def ray_intervals(self, origins, dirs):
        lo = np.zeros(origins.shape[0])
        hi = np.full(origins.shape[0], np.inf)
        for k, (a, b) in enumerate(((self.xmin, self.xmax), (self.ymin, self.ymax))):
            o = origins[:, k]
            d = dirs[:, k]
            with np.errstate(divide="ignore", invalid="ignore"):
                ta = (a - o) / d
                tb = (b - o) / d
            t1 = np.minimum(ta, tb)
            t2 = np.maximum(ta, tb)
            par = d == 0
            inside = (o > a) & (o < b)
            t1 = np.where(par, np.where(inside, -np.inf, np.inf), t1)
            t2 = np.where(par, np.where(inside, np.inf, -np.inf), t2)
            lo = np.maximum(lo, t1)
            hi = np.minimum(hi, t2)
        return rays.normalize(lo[:, None], hi[:, None])

    def signed_distance(self, points):
        p = _as_points(points)
        dx = np.maximum(self.xmin - p[:, 0], p[:, 0] - self.xmax)
        dy = np.maximum(self.ymin - p[:, 1], p[:, 1] - self.ymax)
        outside = np.hypot(np.maximum(dx, 0), np.maximum(dy, 0))
        inside = np.minimum(np.maximum(dx, dy), 0.0)
        return outside + inside

    def critical_angles(self, points):
        return _vertex_angles(_as_points(points), self.corners(), (0.0, np.pi / 2))

    def bbox(self):
        return (self.xmin, self.ymin, self.xmax, self.ymax)

    def boundary_pieces(self):
        c = self.corners()
        return [("seg", c[k], c[(k + 1) % 4]) for k in range(4)]

    def translated(self, v):
        return Box(self.xmin + v[0], self.ymin + v[1], self.xmax + v[0], self.ymax + v[1])

    def corners(self):
        return np.array([[self.xmin, self.ymin], [self.xmax, self.ymin], [self.xmax, self.ymax], [self.xmin, self.ymax]])

    def scaled(self, lam):
        return Box(lam * self.xmin, lam * self.ymin, lam * self.xmax, lam * self.ymax)

    def to_dict(self):
        return {"kind": "box", "bounds": [self.xmin, self.ymin, self.xmax, self.ymax]}


@dataclass(frozen=True)
class Polygon(Shape):
    """Simple polygon, vertices counterclockwise."""

    vertices: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise DomainError("polygon needs at least three 2D vertices")
        if _signed_area(v) <= 0:
            raise DomainError("polygon must be counterclockwise and non-degenerate")
        object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))

    @property
    def array(self):
        return np.asarray(self.vertices)

    @property
    def area(self):
        return _signed_area(self.array)

    @property
    def perimeter_length(self):
        v = self.array
        return float(np.hypot(*(np.roll(v, -1, axis=0) - v).T).sum())

    def contains(self, points):
        return _MplPath(self.array).contains_points(_as_points(points))

    def ray_intervals(self, origins, dirs):
        v = self.array
        p0 = v
        e = np.roll(v, -1, axis=0) - v
        # solve origin + t dir = p0 + u e
        denom = dirs[:, None, 0] * e[None, :, 1] - dirs[:, None, 1] * e[None, :, 0]
        w = p0[None, :, :] - origins[:, None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (w[..., 0] * e[None, :, 1] - w[..., 1] * e[None, :, 0]) / denom
            u = (w[..., 0] * dirs[:, None, 1] - w[..., 1] * dirs[:, None, 0]) / denom
        hit = (denom != 0) & (u >= 0) & (u < 1) & (t > 0)
        t = np.sort(np.where(hit, t, np.inf), axis=1)
        count = hit.sum(axis=1)
        odd = count % 2 == 1
        padded = np.concatenate([np.where(odd, 0.0, np.inf)[:, None], t], axis=1)
        # shift even rows left so that pairs line up
        padded = np.where(odd[:, None], padded, np.concatenate([t, np.full((t.shape[0], 1), np.inf)], axis=1))
        if padded.shape[1] % 2:
            padded = np.concatenate([padded, np.full((t.shape[0], 1), np.inf)], axis=1)
        return rays.normalize(padded[:, 0::2], padded[:, 1::2])

    def signed_distance(self, points):
        p = _as_points(points)
        v = self.array
        e = np.roll(v, -1, axis=0) - v
        w = p[:, None, :] - v[None, :, :]
        lam = np.clip(np.einsum("nkd,kd->nk", w, e) / np.einsum("kd,kd->k", e, e), 0.0, 1.0)
        d = np.hypot(*(w - lam[..., None] * e[None]).transpose(2, 0, 1)).min(axis=1)
        return np.where(self.contains(p), -d, d)

    def critical_angles(self, points):
        v = self.array
        e = np.roll(v, -1, axis=0) - v
        dirs = np.unique(np.round(np.mod(np.arctan2(e[:, 1], e[:, 0]), np.pi), 12))
        return _vertex_angles(_as_points(points), v, tuple(dirs))

    def outer_normal(self, point):
        p = np.asarray(point, dtype=float)
        v = self.array
        e = np.roll(v, -1, axis=0) - v
        w = p[None, :] - v
        lam = np.clip(np.einsum("kd,kd->k", w, e) / np.einsum("kd,kd->k", e, e), 0.0, 1.0)
        k = int(np.argmin(np.hypot(*(w - lam[:, None] * e).T)))
        n = np.array([e[k, 1], -e[k, 0]])
        return n / np.hypot(*n)

    def bbox(self):
        v = self.array
        return (v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max())

    def boundary_pieces(self):
        v = self.array
        return [("seg", v[k], v[(k + 1) % len(v)]) for k in range(len(v))]

    def scaled(self, lam):
        return Polygon(tuple(map(tuple, (lam * self.array).tolist())))

    def translated(self, vec):
        return Polygon(tuple(map(tuple, (self.array + np.asarray(vec)).tolist())))

    def to_dict(self):
        return {"kind": "polygon", "vertices": [list(p) for p in self.vertices]}


def _vertex_angles(points, vertices, edge_dirs):
    """Directions to every vertex plus both orientations of each edge direction."""
    diff = vertices[None, :, :] - points[:, None, :]
    ang = np.arctan2(diff[..., 1], diff[..., 0])
    par = np.array([d + k * np.pi for d in edge_dirs for k in (0, 1)])
    return np.concatenate([ang, np.tile(par, (points.shape[0], 1))], axis=1)


def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class Subgraph(Shape):
    """{(y1, y2) : y2 < u(y1)} for a polynomial u with u(0) = u'(0) = 0.

    ``coeffs[k]`` multiplies y1**k. ``radius`` is the half-width of the
    cylinder B'_r x (-r, r) in which the graph description is used.
    """

    coeffs: tuple
    radius: float = 1.0
    bounded = False

    def __post_init__(self):
        c = tuple(float(x) for x in self.coeffs)
        if len(c) < 3:
            c = c + (0.0,) * (3 - len(c))
        if abs(c[0]) > 0 or abs(c[1]) > 0:
            raise DomainError("subgraph needs u(0) = 0 and u'(0) = 0")
        if not self.radius > 0:
            raise DomainError("radius must be positive")
        while len(c) > 3 and c[-1] == 0.0:
            c = c[:-1]
        object.__setattr__(self, "coeffs", c)

    def u(self, y):
        return np.polynomial.polynomial.polyval(y, self.coeffs)

    def du(self, y):
        return np.polynomial.polynomial.polyval(y, np.polynomial.polynomial.polyder(self.coeffs))

    def contains(self, points):
        p = _as_points(points)
        return p[:, 1] < self.u(p[:, 0])

    def ray_intervals(self, origins, dirs):
        # q(t) = u(x1 + t d1) - x2 - t d2 ; inside where q > 0
        x1, x2 = origins[:, 0], origins[:, 1]
        d1, d2 = dirs[:, 0], dirs[:, 1]
        c = np.asarray(self.coeffs)
        deg = len(c) - 1
        n = origins.shape[0]
        # coefficients of q in t, lowest first
        q = np.zeros((n, deg + 1))
        binom = np.array([[math.comb(k, j) for j in range(deg + 1)] for k in range(deg + 1)], dtype=float)
        for k in range(deg + 1):
            for j in range(k + 1):
                q[:, j] += c[k] * binom[k, j] * x1 ** (k - j) * d1 ** j
        q[:, 0] -= x2
        q[:, 1] -= d2
        roots = _real_roots(q)
        roots = np.where(roots > 1e-14, roots, np.inf)
        roots = np.sort(roots, axis=1)
        # evaluate sign between consecutive crossings
        knots = np.concatenate([np.zeros((n, 1)), roots], axis=1)
        nxt = np.concatenate([roots, np.full((n, 1), np.inf)], axis=1)
        mid = np.where(np.isfinite(nxt), 0.5 * (knots + nxt), np.where(np.isfinite(knots), knots + 1.0 + np.abs(knots), np.inf))
        finite_mid = np.where(np.isfinite(mid), mid, 0.0)
        val = _polyval_rows(q, finite_mid)
        inside = (val > 0) & np.isfinite(mid) & np.isfinite(knots)
        start = np.where(inside, knots, np.inf)
        end = np.where(inside, nxt, np.inf)
        return rays.normalize(start, end)

    def signed_distance(self, points):
        p = _as_points(points)
        span = max(4.0 * self.radius, 4.0 * float(np.abs(p).max(initial=1.0)))
        y = np.linspace(-span, span, 20001)
        curve = np.stack([y, self.u(y)], axis=1)
        d = np.full(p.shape[0], np.inf)
        for chunk in np.array_split(np.arange(p.shape[0]), max(1, p.shape[0] // 256)):
            diff = p[chunk, None, :] - curve[None]
            d[chunk] = np.hypot(diff[..., 0], diff[..., 1]).min(axis=1)
        return np.where(self.contains(p), -d, d)

    def critical_angles(self, points):
        p = _as_points(points)
        a = np.arctan(self.du(p[:, 0]))
        return np.stack([a, a + np.pi], axis=1)

    def outer_normal(self, point):
        g = float(self.du(np.asarray(point, dtype=float)[0]))
        n = np.array([-g, 1.0])
        return n / np.hypot(*n)

    def scaled(self, lam):
        return Subgraph(tuple(ck * lam ** (1 - k) for k, ck in enumerate(self.coeffs)), lam * self.radius)

    def cylinder(self):
        r = self.radius
        return Box(-r, -r, r, r)

    def to_dict(self):
        return {"kind": "subgraph", "coeffs": list(self.coeffs), "radius": self.radius}


def _polyval_rows(q, t):
    out = np.zeros_like(t)
    for k in range(q.shape[1] - 1, -1, -1):
        out = out * t + q[:, k : k + 1]
    return out


def _real_roots(q):
    """Real roots per row of polynomials given lowest-degree first; inf padded."""
    n, m = q.shape
    deg = m - 1
    out = np.full((n, deg), np.inf)
    if deg == 2:
        a, b, c = q[:, 2], q[:, 1], q[:, 0]
        lin = np.abs(a) < 1e-300
        disc = b * b - 4 * a * c
        ok = (disc >= 0) & ~lin
        r = np.sqrt(np.where(ok, disc, 0.0))
        qq = -0.5 * (b + np.copysign(r, b))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(ok & (qq != 0), qq / a, np.inf)
            r2 = np.where(ok & (qq != 0), c / qq, np.where(ok, 0.0, np.inf))
            rl = np.where(lin & (b != 0), -c / b, np.inf)
        out[:, 0] = np.where(lin, rl, r1)
        out[:, 1] = np.where(lin, np.inf, r2)
        return out
    for i in range(n):
        coeffs = np.trim_zeros(q[i, ::-1], "f")
        if coeffs.size < 2:
            continue
        r = np.roots(coeffs)
        r = r[np.abs(r.imag) < 1e-10].real
        out[i, : r.size] = r
    return out


@dataclass(frozen=True)
class Complement(Shape):
    base: Shape

    @property
    def bounded(self):
        return False

    def contains(self, points):
        return ~self.base.contains(points)

    def ray_intervals(self, origins, dirs):
        return rays.complement(*self.base.ray_intervals(origins, dirs))

    def signed_distance(self, points):
        return -self.base.signed_distance(points)

    def critical_angles(self, points):
        return self.base.critical_angles(points)

    def boundary_pieces(self):
        return self.base.boundary_pieces()

    def outer_normal(self, point):
        return -self.base.outer_normal(point)

    def complement(self):
        return self.base

    def scaled(self, lam):
        return Complement(self.base.scaled(lam))

    def translated(self, v):
        return Complement(self.base.translated(v))


@dataclass(frozen=True)
class Intersection(Shape):
    parts: tuple

    @property
    def bounded(self):
        return any(p.bounded for p in self.parts)

    def contains(self, points):
        out = self.parts[0].contains(points)
        for p in self.parts[1:]:
            out = out & p.contains(points)
        return out

    def ray_intervals(self, origins, dirs):
        s, e = self.parts[0].ray_intervals(origins, dirs)
        for p in self.parts[1:]:
            s, e = rays.intersect(s, e, *p.ray_intervals(origins, dirs))
        return s, e

    def signed_distance(self, points):
        # exact on the boundary and outside away from corners; a bound elsewhere
        return np.max([p.signed_distance(points) for p in self.parts], axis=0)

    def boundary_pieces(self):
        return [piece for p in self.parts for piece in p.boundary_pieces()]

    def corner_points(self):
        pieces = [p.boundary_pieces() for p in self.parts]
        pts = []
        for i in range(len(pieces)):
            for j in range(i + 1, len(pieces)):
                for a in pieces[i]:
                    for b in pieces[j]:
                        pts.extend(_piece_intersections(a, b))
        return np.asarray(pts, dtype=float).reshape(-1, 2)

    def critical_angles(self, points):
        pts = _as_points(points)
        parts = [p.critical_angles(pts) for p in self.parts]
        corners = self.corner_points()
        if corners.size:
            diff = corners[None, :, :] - pts[:, None, :]
            parts.append(np.arctan2(diff[..., 1], diff[..., 0]))
        return np.concatenate(parts, axis=1)

    def bbox(self):
        boxes = [p.bbox() for p in self.parts if p.bounded and p.bbox() is not None]
        if not boxes:
            return None
        b = np.asarray(boxes)
        return (b[:, 0].max(), b[:, 1].max(), b[:, 2].min(), b[:, 3].min())

    def scaled(self, lam):
        return Intersection(tuple(p.scaled(lam) for p in self.parts))

    def translated(self, v):
        return Intersection(tuple(p.translated(v) for p in self.parts))


def _line_params(piece):
    kind, p, q = piece
    if kind == "line":
        return np.asarray(p, float), np.asarray(q, float), -np.inf, np.inf
    d = np.asarray(q, float) - np.asarray(p, float)
    return np.asarray(p, float), d, 0.0, 1.0


def _piece_intersections(a, b):
    """Intersection points of two primitive boundary curves."""
    if a[0] == "circle" and b[0] == "circle":
        c1, r1 = a[1], a[2]
        c2, r2 = b[1], b[2]
        d = float(np.hypot(*(c2 - c1)))
        if d == 0 or d > r1 + r2 or d < abs(r1 - r2):
            return []
        x = (d * d + r1 * r1 - r2 * r2) / (2 * d)
        y = math.sqrt(max(r1 * r1 - x * x, 0.0))
        e = (c2 - c1) / d
        f = np.array([-e[1], e[0]])
        return [c1 + x * e + y * f, c1 + x * e - y * f]
    if a[0] == "circle":
        a, b = b, a
    p, d, lo, hi = _line_params(a)
    if b[0] == "circle":
        c, r = b[1], b[2]
        w = p - c
        A = d @ d
        B = 2 * d @ w
        C = w @ w - r * r
        disc = B * B - 4 * A * C
        if disc < 0:
            return []
        ts = [(-B - math.sqrt(disc)) / (2 * A), (-B + math.sqrt(disc)) / (2 * A)]
        return [p + t * d for t in ts if lo <= t <= hi]
    q, e, lo2, hi2 = _line_params(b)
    den = d[0] * e[1] - d[1] * e[0]
    if den == 0:
        return []
    w = q - p
    t = (w[0] * e[1] - w[1] * e[0]) / den
    u = (w[0] * d[1] - w[1] * d[0]) / den
    if lo <= t <= hi and lo2 <= u <= hi2:
        return [p + t * d]
    return []


def union(a, b):
    return Complement(Intersection((Complement(a), Complement(b))))


# ---------------------------------------------------------------------------
# von Koch snowflake


@dataclass(frozen=True, eq=False)
class KochApproximation:
    """Base triangle plus the equilateral bumps of generations 1..k.

    ``triangles[j]`` is an array (count_j, 3, 2) of the triangles added at
    generation j (index 0 is the base triangle).
    """

    generation: int
    side: float
    triangles: tuple
    boundary: np.ndarray = field(repr=False)

    def triangle_counts(self):
        return [t.shape[0] for t in self.triangles]

    @property
    def area(self):
        total = 0.0
        for t in self.triangles:
            a, b, c = t[:, 0], t[:, 1], t[:, 2]
            total += 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (c[:, 0] - a[:, 0]) * (b[:, 1] - a[:, 1])).sum()
        return float(total)

    def polygon(self):
        return Polygon(tuple(map(tuple, self.boundary.tolist())))

    def contains(self, points):
        return _MplPath(self.boundary).contains_points(_as_points(points))

    def bbox(self):
        v = self.boundary
        return (v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max())

    def segments(self):
        v = self.boundary
        return v, np.roll(v, -1, axis=0)

    def to_dict(self):
        return {"kind": "koch", "generation": self.generation, "side": self.side}


def koch_snowflake(k, side=1.0):
    """Snowflake approximation with barycentre at the origin and a vertex on the y axis."""
    k = int(k)
    if k < 0 or not side > 0:
        raise DomainError("need k >= 0 and side > 0")
    height = math.sqrt(3.0) / 2.0 * side
    top = (0.0, 2.0 * height / 3.0)
    left = (-side / 2.0, -height / 3.0)
    right = (side / 2.0, -height / 3.0)
    poly = np.array([top, left, right])  # counterclockwise
    triangles = [poly[None].copy()]
    for _ in range(k):
        p = poly
        q = np.roll(poly, -1, axis=0)
        d = q - p
        a = p + d / 3.0
        b = p + 2.0 * d / 3.0
        outward = np.stack([d[:, 1], -d[:, 0]], axis=1)
        apex = 0.5 * (p + q) + outward * (math.sqrt(3.0) / 6.0)
        triangles.append(np.stack([a, apex, b], axis=1))
        poly = np.stack([p, a, apex, b], axis=1).reshape(-1, 2)
    return KochApproximation(k, float(side), tuple(triangles), poly)


def koch_area_closed_form(k, side=1.0):
    base = math.sqrt(3.0) / 4.0 * side ** 2
    return base + sum(3 * 4 ** (j - 1) * math.sqrt(3.0) / 4.0 * (side / 3 ** j) ** 2 for j in range(1, k + 1))


# ---------------------------------------------------------------------------
# rasterisation and distances


def rasterize(shape, bbox, h, max_cells=MAX_CELLS):
    """Cell-centre rasterisation of a shape on the grid covering ``bbox``."""
    x0, y0, x1, y1 = (float(v) for v in bbox)
    if not h > 0 or not (x1 > x0 and y1 > y0):
        raise DomainError("need h > 0 and a non-degenerate bbox")
    nx = int(math.ceil((x1 - x0) / h - 1e-9))
    ny = int(math.ceil((y1 - y0) / h - 1e-9))
    if nx * ny > max_cells:
        raise ResolutionError(f"{nx}x{ny} cells exceeds the budget of {max_cells}")
    if isinstance(shape, (Polygon, KochApproximation)):
        v = shape.boundary if isinstance(shape, KochApproximation) else shape.array
        return GridSet(_scanline_fill(v, x0, y0, h, nx, ny), (x0, y0), h)
    xs = x0 + (np.arange(nx) + 0.5) * h
    ys = y0 + (np.arange(ny) + 0.5) * h
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    bits = shape.contains(pts).reshape(ny, nx)
    return GridSet(bits, (x0, y0), h)


def _scanline_fill(v, x0, y0, h, nx, ny):
    """Even-odd cell-centre fill of a closed polygon, linear in the number of crossings."""
    a = v
    b = np.roll(v, -1, axis=0)
    lo = np.minimum(a[:, 1], b[:, 1])
    hi = np.maximum(a[:, 1], b[:, 1])
    # rows whose centre y satisfies lo <= y < hi
    r0 = np.clip(np.ceil((lo - y0) / h - 0.5), 0, ny).astype(np.int64)
    r1 = np.clip(np.ceil((hi - y0) / h - 0.5), 0, ny).astype(np.int64)
    cnt = r1 - r0
    edge = np.repeat(np.arange(len(a)), cnt)
    start = np.repeat(r0 - np.cumsum(cnt) + cnt, cnt)
    rows = start + np.arange(edge.size)
    y = y0 + (rows + 0.5) * h
    t = (y - a[edge, 1]) / (b[edge, 1] - a[edge, 1])
    x = a[edge, 0] + t * (b[edge, 0] - a[edge, 0])
    cols = np.clip(np.ceil((x - x0) / h - 0.5), 0, nx).astype(np.int64)
    toggles = np.zeros((ny, nx + 1), dtype=np.int64)
    np.add.at(toggles, (rows, cols), 1)
    return (np.cumsum(toggles, axis=1)[:, :nx] % 2).astype(bool)


def grid_signed_distance(grid):
    """Per-cell signed distance to the cell interface (negative inside)."""
    bits = grid.bits
    if bits.all() or not bits.any():
        raise DegenerateSet("grid set or its complement is empty")
    to_out = ndimage.distance_transform_edt(bits)
    to_in = ndimage.distance_transform_edt(~bits)
    return grid.h * np.where(bits, -(to_out - 0.5), to_in - 0.5)


def signed_distance(E, x):
    """d(x, E) - d(x, complement of E)."""
    pts = _as_points(x)
    if isinstance(E, GridSet):
        field_ = grid_signed_distance(E)
        i, j = E.cell_index(pts)
        i = np.clip(i, 0, E.height - 1)
        j = np.clip(j, 0, E.width - 1)
        out = field_[i, j]
    else:
        out = E.signed_distance(pts)
    return out if np.ndim(x) > 1 else float(out[0])


def tubular_set(omega, rho):
    """{signed_distance < rho}; rho < 0 shrinks, rho > 0 grows."""
    rho = float(rho)
    if isinstance(omega, IntervalSet):
        grown = [(a - rho, b + rho) for a, b in omega if b - a + 2 * rho > 0]
        if not grown:
            raise DegenerateSet("tubular set is empty")
        return make_interval_set(grown)
    if isinstance(omega, Ball):
        if omega.radius + rho <= 0:
            raise DegenerateSet("tubular set is empty")
        return Ball(omega.center, omega.radius + rho)
    if isinstance(omega, HalfSpace):
        return HalfSpace(omega.normal, omega.offset + rho)
    if isinstance(omega, Box):
        if rho < 0 and min(omega.xmax - omega.xmin, omega.ymax - omega.ymin) <= -2 * rho:
            raise DegenerateSet("tubular set is empty")
        if rho <= 0:
            return Box(omega.xmin - rho, omega.ymin - rho, omega.xmax + rho, omega.ymax + rho)
        return _RoundedBox(omega, rho)
    if isinstance(omega, GridSet):
        d = grid_signed_distance(omega)
        bits = d < rho
        if bits.all() or not bits.any():
            raise DegenerateSet("tubular set is empty or full")
        return omega.with_bits(bits)
    raise TypeError(f"tubular_set does not support {type(omega).__name__}")


@dataclass(frozen=True)
class _RoundedBox(Shape):
    """Outer parallel set of a box (rounded corners)."""

    box: Box
    rho: float

    def contains(self, points):
        return self.box.signed_distance(points) < self.rho

    def signed_distance(self, points):
        return self.box.signed_distance(points) - self.rho

    def ray_intervals(self, origins, dirs):
        b, r = self.box, self.rho
        parts = [
            Box(b.xmin - r, b.ymin, b.xmax + r, b.ymax),
            Box(b.xmin, b.ymin - r, b.xmax, b.ymax + r),
        ] + [Ball(tuple(c), r) for c in b.corners()]
        s, e = parts[0].ray_intervals(origins, dirs)
        for p in parts[1:]:
            s, e = rays.union(s, e, *p.ray_intervals(origins, dirs))
        return s, e

    def critical_angles(self, points):
        b, r = self.box, self.rho
        parts = [Box(b.xmin - r, b.ymin, b.xmax + r, b.ymax), Box(b.xmin, b.ymin - r, b.xmax, b.ymax + r)]
        parts += [Ball(tuple(c), r) for c in b.corners()]
        return np.concatenate([p.critical_angles(points) for p in parts], axis=1)

    def bbox(self):
        b, r = self.box, self.rho
        return (b.xmin - r, b.ymin - r, b.xmax + r, b.ymax + r)


def band(omega, rho):
    """Open tubular neighbourhood N_rho(boundary of omega)."""
    outer = tubular_set(omega, rho)
    if isinstance(omega, IntervalSet):
        try:
            return outer.difference(tubular_set(omega, -rho))
        except DegenerateSet:
            return outer
    inner = tubular_set(omega, -rho)
    if isinstance(omega, GridSet):
        return omega.with_bits(outer.bits & ~inner.bits)
    return Intersection((outer, Complement(inner)))


# ---------------------------------------------------------------------------
# (de)serialisation


def shape_from_dict(d):
    kind = d["kind"]
    if kind == "ball":
        return Ball(tuple(d["center"]), float(d["radius"]))
    if kind == "halfspace":
        return HalfSpace(tuple(d["normal"]), float(d["offset"]))
    if kind == "polygon":
        return Polygon(tuple(map(tuple, d["vertices"])))
    if kind == "subgraph":
        return Subgraph(tuple(d["coeffs"]), float(d["radius"]))
    if kind == "box":
        return Box(*d["bounds"])
    if kind == "grid":
        return GridSet.from_dict(d)
    if kind == "intervals":
        return make_interval_set([tuple(p) for p in d["intervals"]])
    if kind == "empty":
        return EmptySet()
    if kind == "koch":
        return koch_snowflake(int(d["generation"]), float(d["side"]))
    raise DomainError(f"unknown shape kind {kind!r}")
