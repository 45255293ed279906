"""Box counting, the perimeter-based dimension Dim_F and the Koch series bound."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import kernel as K
from .errors import DomainError, EmptyBoundary, Inconclusive, InsufficientRows
from .geometry import Ball, Box, GridSet, IntervalSet, KochApproximation, Polygon, rasterize

KOCH_DIMENSION = math.log(4.0) / math.log(3.0)
KOCH_THRESHOLD = 2.0 - KOCH_DIMENSION


@dataclass
class BoxCountTrace:
    rows: list  # (delta, count)

    def __post_init__(self):
        d = [r[0] for r in self.rows]
        if any(b >= a for a, b in zip(d, d[1:])):
            raise DomainError("deltas must be strictly decreasing")

    @property
    def deltas(self):
        return np.array([r[0] for r in self.rows], dtype=float)

    @property
    def counts(self):
        return np.array([r[1] for r in self.rows], dtype=np.int64)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta", "count"])
        for d, c in self.rows:
            w.writerow([repr(float(d)), int(c)])
        return buf.getvalue()


@dataclass
class DimensionEstimate:
    value: float
    stderr: float
    fit_range: tuple
    diagnostics: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(
            {"value": self.value, "stderr": self.stderr, "fit_range": list(self.fit_range), "diagnostics": self.diagnostics},
            sort_keys=True,
        )


# ---------------------------------------------------------------------------
# box counting


def boundary_segments(boundary):
    """(starts, ends) arrays of shape (m, 2) for a polyline set, polygon, Koch approximation or grid."""
    if isinstance(boundary, KochApproximation):
        return boundary.segments()
    if isinstance(boundary, Polygon):
        v = boundary.array
        return v, np.roll(v, -1, axis=0)
    if isinstance(boundary, GridSet):
        return _grid_interface_segments(boundary)
    if isinstance(boundary, tuple) and len(boundary) == 2:
        a, b = (np.atleast_2d(np.asarray(p, dtype=float)) for p in boundary)
        return a, b
    # list of polylines
    starts, ends = [], []
    for line in boundary:
        v = np.asarray(line, dtype=float)
        starts.append(v[:-1])
        ends.append(v[1:])
    if not starts:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.concatenate(starts), np.concatenate(ends)


def _grid_interface_segments(g):
    b = np.pad(g.bits, 1, constant_values=False)
    x0, y0 = g.origin
    h = g.h
    vi, vj = np.nonzero(b[:, 1:] != b[:, :-1])  # vertical edges at x index vj, row vi - 1
    hi_, hj = np.nonzero(b[1:, :] != b[:-1, :])
    xs = x0 + vj * h
    ys = y0 + (vi - 1) * h
    va = np.stack([xs, ys], axis=1)
    vb = np.stack([xs, ys + h], axis=1)
    xh = x0 + (hj - 1) * h
    yh = y0 + hi_ * h
    ha = np.stack([xh, yh], axis=1)
    hb = np.stack([xh + h, yh], axis=1)
    return np.concatenate([va, ha]), np.concatenate([vb, hb])


def _snap(u, tol=1e-9):
    r = np.round(u)
    return np.where(np.abs(u - r) < tol * np.maximum(1.0, np.abs(r)), r, u)


def _occupied_boxes(a, b, corner, delta):
    """Indices of the half-open boxes of side delta met by the closed segments [a, b]."""
    ua = _snap((a - corner) / delta)
    ub = _snap((b - corner) / delta)
    # split parameters: grid-line crossings in each coordinate
    pieces_t = [np.zeros(len(ua)), np.ones(len(ua))]
    seg_id = [np.arange(len(ua)), np.arange(len(ua))]
    for k in range(2):
        lo = np.minimum(ua[:, k], ub[:, k])
        hi = np.maximum(ua[:, k], ub[:, k])
        first = np.ceil(lo)
        cnt = np.maximum(np.floor(hi) - first + 1, 0).astype(np.int64)
        cnt = np.where(ua[:, k] == ub[:, k], 0, cnt)
        if cnt.sum() == 0:
            continue
        ids = np.repeat(np.arange(len(ua)), cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        line = first[ids] + offs
        t = (line - ua[ids, k]) / (ub[ids, k] - ua[ids, k])
        pieces_t.append(t)
        seg_id.append(ids)
    t = np.concatenate(pieces_t)
    ids = np.concatenate(seg_id)
    order = np.lexsort((t, ids))
    t = t[order]
    ids = ids[order]
    d = ub - ua
    pts = ua[ids] + t[:, None] * d[ids]
    # exact grid coordinates for split points on a line
    pts = _snap(pts)
    same = ids[1:] == ids[:-1]
    mids = 0.5 * (pts[1:] + pts[:-1])[same]
    allp = np.concatenate([pts, mids])
    return np.unique(np.floor(allp).astype(np.int64), axis=0)


def box_count(boundary, delta_list, corner=None):
    """Number of half-open grid boxes of side delta meeting the boundary, per delta."""
    a, b = boundary_segments(boundary)
    if len(a) == 0:
        raise EmptyBoundary("no boundary segments")
    if corner is None:
        allp = np.concatenate([a, b])
        corner = allp.min(axis=0)
    corner = np.asarray(corner, dtype=float)
    deltas = sorted((float(d) for d in delta_list), reverse=True)
    if any(d <= 0 for d in deltas):
        raise DomainError("box sides must be positive")
    rows = [(d, int(len(_occupied_boxes(a, b, corner, d)))) for d in deltas]
    return BoxCountTrace(rows)


def dimension_fit(trace, fit_range=None):
    """Least-squares slope of log N against -log delta."""
    rows = trace.rows
    if fit_range is not None:
        hi, lo = fit_range
        rows = [r for r in rows if lo * (1 - 1e-12) <= r[0] <= hi * (1 + 1e-12)]
    if len(rows) < 4:
        raise InsufficientRows("need at least four rows")
    x = -np.log([r[0] for r in rows])
    y = np.log([r[1] for r in rows])
    fit = stats.linregress(x, y)
    return DimensionEstimate(float(fit.slope), float(fit.stderr), (rows[0][0], rows[-1][0]), {"intercept": float(fit.intercept)})


# ---------------------------------------------------------------------------
# Dim_F through the divergence threshold of P_s


def truncation_ladder(E, frame, s_list, level=7, max_cells=6_000_000):
    """Truncated perimeters on one rasterization of side L / 3^level.

    Row k holds the part of P_s^L(E_h, frame) from pairs at distance at
    least rho_k = L / 3^k, k = 0..level-2; the finest cut-off stays nine
    cells above h. Returns (rho, values).
    """
    x0, y0, x1, y1 = frame
    L = max(x1 - x0, y1 - y0)
    h = L / 3 ** level
    g = rasterize(E, frame, h, max_cells=max_cells)
    if not g.bits.any() or g.bits.all():
        raise DomainError("rasterization is empty or full")
    C = K.pair_counts(g.bits, ~g.bits)
    ny, nx = g.height, g.width
    dist = np.hypot(np.arange(-(ny - 1), ny)[:, None], np.arange(-(nx - 1), nx)[None, :]) * h
    rho = L / 3.0 ** np.arange(level - 1)
    shell = np.searchsorted(-rho, -dist, side="right")  # number of cut-offs at or below dist
    values = np.zeros((rho.size, len(s_list)))
    for j, s in enumerate(s_list):
        W, _ = K.cell_kernel_table(float(s), ny, nx)
        per = np.bincount(shell.ravel(), weights=(W * C).ravel(), minlength=rho.size + 1) * h ** (2.0 - s)
        # per[k] collects distances in [rho_k, rho_(k-1)); per[rho.size] lies below the last cut-off
        values[:, j] = np.cumsum(per[: rho.size])
    return rho, values


def classify_ladder(values, window=2):
    """Per column: geometric mean of the last ``window`` increment ratios, and divergent flag.

    Increments of a convergent ladder shrink geometrically; a divergent one
    keeps them from shrinking.
    """
    D = np.abs(np.diff(values, axis=0))
    if D.shape[0] < window + 1:
        raise InsufficientRows("ladder too short for the increment test")
    with np.errstate(divide="ignore", invalid="ignore"):
        R = D[1:] / D[:-1]
        gm = np.exp(np.mean(np.log(R[-window:]), axis=0))
    gm = np.nan_to_num(gm, nan=0.0)
    return gm, gm >= 1.0


def dim_f_estimate(E, omega=None, s_list=None, quad=None, level=7, window=1, max_cells=6_000_000):
    """n minus the largest s with P_s^L(E, Omega) finite.

    Each s is classified on a ladder of interaction cut-offs rho = L / 3^k:
    the contribution of distances in [rho, 3 rho) scales like rho^(n - s - d)
    for a boundary of box dimension d, so the shells stop shrinking exactly
    when P_s diverges.
    """
    s_list = sorted(float(s) for s in (s_list if s_list is not None else np.arange(0.5, 1.0, 0.02)))
    if isinstance(E, IntervalSet):
        from .perimeter import s_perimeter_global_1d

        vals = [s_perimeter_global_1d(E, s) for s in s_list]
        if not all(math.isfinite(v) for v in vals):
            raise Inconclusive("closed form is infinite")
        return DimensionEstimate(0.0, 0.0, (s_list[0], s_list[-1]), {"path": "exact", "s": s_list, "values": vals})
    if omega is None:
        bb = E.bbox() if callable(getattr(E, "bbox", None)) else E.bbox
        x0, y0, x1, y1 = bb
        side = 1.1 * max(x1 - x0, y1 - y0)
        cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        omega = Box(cx - side / 2, cy - side / 2, cx + side / 2, cy + side / 2)
    if not isinstance(omega, Box):
        raise DomainError("Omega must be a box (it is the rasterization frame)")
    frame = (omega.xmin, omega.ymin, omega.xmax, omega.ymax)
    rho, values = truncation_ladder(E, frame, s_list, level, max_cells)
    gm, div = classify_ladder(values, window)
    diag = {
        "path": "ladder",
        "rho": [float(r) for r in rho],
        "s": s_list,
        "increment_ratio": [float(v) for v in gm],
        "divergent": [bool(v) for v in div],
    }
    if not div.any():
        return DimensionEstimate(1.0, 0.0, (s_list[0], s_list[-1]), diag)
    k = int(np.argmax(div))
    if k == 0:
        raise Inconclusive("every s in the list is classified divergent")
    s_conv, s_div = s_list[k - 1], s_list[k]
    l0, l1 = math.log(gm[k - 1]), math.log(gm[k])
    crossing = s_conv + (s_div - s_conv) * (-l0) / (l1 - l0) if l1 != l0 else 0.5 * (s_conv + s_div)
    diag.update(s_convergent=s_conv, s_divergent=s_div, s_crossing=crossing)
    return DimensionEstimate(2.0 - s_conv, 0.5 * (s_div - s_conv), (s_conv, s_div), diag)


# ---------------------------------------------------------------------------
# Koch lower-bound series


@dataclass
class KochSeries:
    s: float
    ratio: float
    L: float
    partial_sums: np.ndarray

    @property
    def diverges(self):
        return ratio_exceeds_one(self.s)

    def to_dict(self):
        return {"s": self.s, "ratio": self.ratio, "L": self.L, "partial_sums": [float(v) for v in self.partial_sums]}


def ratio_exceeds_one(s):
    """4 / 3^(2 - s) > 1, decided by the closed-form comparison with the threshold."""
    return s > KOCH_THRESHOLD


_L_CACHE = {}


def koch_series_bound(s, K_terms=20, quad=None):
    """Partial sums of (3 / 3^(2-s)) L_s(T, B_1((0, 15))) sum_k (4 / 3^(2-s))^k."""
    if not 0 < s < 1:
        raise DomainError("s must lie in (0, 1)")
    key = float(s)
    if key not in _L_CACHE:
        h = math.sqrt(3.0) / 2.0
        T = Polygon(((-0.5, -h / 3.0), (0.5, -h / 3.0), (0.0, 2.0 * h / 3.0)))
        _L_CACHE[key] = K.interaction_quad(T, Ball((0.0, 15.0), 1.0), K.FracParams(2, s), quad)[0]
    L = _L_CACHE[key]
    ratio = 4.0 / 3.0 ** (2.0 - s)
    terms = ratio ** np.arange(K_terms + 1)
    return KochSeries(float(s), float(ratio), float(L), (3.0 / 3.0 ** (2.0 - s)) * L * np.cumsum(terms))
