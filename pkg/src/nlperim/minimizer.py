"""Discrete minimisation of P_s(., Omega) on a pixel grid with fixed exterior data.

A problem lives on a frame of H x W cells. Cells flagged in ``free_mask`` form
Omega; every other frame cell carries a fixed bit. Outside the frame the set
is ``tail``: nothing (None), everything ("all") or a half-space.

With x the free bits the energy is the binary quadratic form

    J(x) = sum_{i<j} W_ij [x_i != x_j] + sum_i x_i U1_i + (1 - x_i) U0_i,

where U1_i (U0_i) is the interaction of cell i, set (unset), with the fixed
cells of the opposite state, inside and outside the frame.
"""
from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import kernel as K
from .errors import CellNotFree, DomainError, NoInteriorBalls, ResourceCapExceeded, SizeMismatch, TooLarge
from .geometry import Box, Complement, GridSet, HalfSpace, Intersection

try:  # numba is optional; the pure-numpy loop is the fallback
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None

MEMORY_CAP_BYTES = 2 * 1024 ** 3
BRUTE_FORCE_LIMIT = 24
TIE_RTOL = 1e-12


def _pack(bits):
    raw = np.packbits(np.asarray(bits, dtype=bool).ravel(), bitorder="little")
    return base64.b64encode(raw.tobytes()).decode("ascii")


def _unpack(text, shape):
    raw = np.frombuffer(base64.b64decode(text), dtype=np.uint8)
    n = int(np.prod(shape))
    return np.unpackbits(raw, bitorder="little")[:n].astype(bool).reshape(shape)


def _tail_to_json(tail):
    if tail is None or isinstance(tail, str):
        return tail
    return tail.to_dict()


def _tail_from_json(d):
    if d is None or isinstance(d, str):
        return d
    return HalfSpace(tuple(d["normal"]), float(d["offset"]))


@dataclass(eq=False)
class MinimizationProblem:
    free_mask: np.ndarray
    exterior: np.ndarray  # fixed bits; entries under free_mask are ignored
    origin: tuple = (0.0, 0.0)
    h: float = 1.0
    tail: object = None  # None | "all" | HalfSpace
    params: K.FracParams = field(default_factory=K.FracParams)
    quad: K.QuadratureSpec = field(default_factory=K.QuadratureSpec)

    def __post_init__(self):
        self.free_mask = np.asarray(self.free_mask, dtype=bool)
        ext = np.asarray(self.exterior, dtype=bool)
        if self.free_mask.shape != ext.shape or self.free_mask.ndim != 2:
            raise SizeMismatch("free mask and exterior must be 2D arrays of one shape")
        self.exterior = ext & ~self.free_mask
        if not (self.tail is None or self.tail == "all" or isinstance(self.tail, HalfSpace)):
            raise DomainError("exterior tail must be None, 'all' or a half-space")
        if self.params.n != 2:
            raise DomainError("grid minimisation is planar")
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        self.h = float(self.h)
        self._cache = None

    # -- geometry -----------------------------------------------------------
    @property
    def shape(self):
        return self.free_mask.shape

    @property
    def free_cells(self):
        """(k, 2) array of (row, col), row-major; this fixes the bit order."""
        return np.argwhere(self.free_mask)

    @property
    def n_free(self):
        return int(self.free_mask.sum())

    @property
    def frame(self):
        H, W = self.shape
        x0, y0 = self.origin
        return Box(x0, y0, x0 + W * self.h, y0 + H * self.h)

    def grid(self, config):
        """Full frame GridSet for the given free bits."""
        bits = self.exterior.copy()
        bits[self.free_mask] = np.asarray(config, dtype=bool)
        return GridSet(bits, self.origin, self.h)

    def complemented(self):
        if self.tail is None:
            tail = "all"
        elif self.tail == "all":
            tail = None
        else:
            tail = HalfSpace(tuple(-np.asarray(self.tail.normal)), -self.tail.offset)
        return MinimizationProblem(self.free_mask, ~self.exterior & ~self.free_mask, self.origin, self.h, tail, self.params, self.quad)

    # -- serialisation ------------------------------------------------------
    def to_dict(self):
        H, W = self.shape
        return {
            "width": W,
            "height": H,
            "origin": list(self.origin),
            "h": self.h,
            "free_mask": _pack(self.free_mask),
            "exterior": _pack(self.exterior),
            "tail": _tail_to_json(self.tail),
            "params": {"n": self.params.n, "s": self.params.s},
        }

    @classmethod
    def from_dict(cls, d):
        shape = (int(d["height"]), int(d["width"]))
        p = d.get("params", {})
        return cls(
            _unpack(d["free_mask"], shape),
            _unpack(d["exterior"], shape),
            tuple(d.get("origin", (0.0, 0.0))),
            float(d.get("h", 1.0)),
            _tail_from_json(d.get("tail")),
            K.FracParams(int(p.get("n", 2)), float(p.get("s", 0.5))),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    # -- precomputation -----------------------------------------------------
    def _outside_frame(self, cells):
        """Per free cell: interaction with the unset and with the set part outside the frame."""
        s = self.params.s
        total = K.cell_average(lambda p: K.box_exterior_kernel(p, self.frame, s), self.shape, self.origin, self.h, cells, order=6)
        if self.tail is None:
            set_part = np.zeros_like(total)
        elif self.tail == "all":
            set_part = total
        else:
            outer = Intersection((self.tail, Complement(self.frame)))
            fn = lambda p: K.ray_kernel_integral(outer, p, s, n_theta=24)  # noqa: E731
            set_part = K.cell_average(fn, self.shape, self.origin, self.h, cells, order=6)
        area = self.h ** 2
        return area * (total - set_part), area * set_part

    def matrices(self):
        """(W, U0, U1) with W the free x free coupling matrix."""
        if self._cache is not None:
            return self._cache
        cells = self.free_cells
        k = cells.shape[0]
        if 8.0 * k * k > MEMORY_CAP_BYTES:
            raise ResourceCapExceeded(f"coupling matrix for {k} free cells exceeds the memory cap")
        H, Wd = self.shape
        s = self.params.s
        tab, _ = K.cell_kernel_table(float(s), H, Wd)
        scale = self.h ** (2.0 - s)
        di = cells[:, None, 0] - cells[None, :, 0] + H - 1
        dj = cells[:, None, 1] - cells[None, :, 1] + Wd - 1
        W = scale * tab[di, dj]
        fixed = ~self.free_mask

        def field_of(mask):
            if not mask.any():
                return np.zeros(k)
            c = signal.fftconvolve(mask.astype(float), tab, mode="full")[H - 1 : 2 * H - 1, Wd - 1 : 2 * Wd - 1]
            return scale * c[cells[:, 0], cells[:, 1]]

        out_unset, out_set = self._outside_frame(cells) if k else (np.zeros(0), np.zeros(0))
        U1 = field_of(fixed & ~self.exterior) + out_unset
        U0 = field_of(fixed & self.exterior) + out_set
        self._cache = (W, U0, U1)
        return self._cache


# ---------------------------------------------------------------------------
# energy


def _check_config(problem, config):
    x = np.asarray(config)
    if x.ndim != 1 or x.size != problem.n_free:
        raise SizeMismatch(f"config has {x.size} entries, problem has {problem.n_free} free cells")
    return x.astype(float)


def energy(problem, config):
    """J_Omega of the configuration (free bits in row-major order)."""
    x = _check_config(problem, config)
    W, U0, U1 = problem.matrices()
    pair = 0.5 * float(np.sum(W * (x[:, None] != x[None, :])))
    return pair + float(np.dot(x, U1) + np.dot(1.0 - x, U0))


def _flip_deltas(W, U0, U1, x):
    return (1.0 - 2.0 * x) * (U1 - U0 + W @ (1.0 - 2.0 * x))


def energy_delta_flip(problem, config, cell):
    """J(config with ``cell`` flipped) - J(config). ``cell`` is a free index or (row, col)."""
    x = _check_config(problem, config)
    idx = _free_index(problem, cell)
    W, U0, U1 = problem.matrices()
    sign = 1.0 - 2.0 * x[idx]
    return float(sign * (U1[idx] - U0[idx] + np.dot(W[idx], 1.0 - 2.0 * x)))


def _free_index(problem, cell):
    if np.ndim(cell) == 0:
        idx = int(cell)
        if not 0 <= idx < problem.n_free:
            raise CellNotFree(f"free index {idx} out of range")
        return idx
    i, j = (int(v) for v in cell)
    H, W = problem.shape
    if not (0 <= i < H and 0 <= j < W) or not problem.free_mask[i, j]:
        raise CellNotFree(f"cell {(i, j)} is not free")
    return int(np.count_nonzero(problem.free_mask.ravel()[: i * W + j]))


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class MinimizerReport:
    configuration: tuple
    energy: float
    iterations: int
    accepted_flips: int
    seed: int
    method: str

    @property
    def bits(self):
        return np.asarray(self.configuration, dtype=bool)

    def to_dict(self):
        return {
            "configuration": "".join("1" if b else "0" for b in self.configuration),
            "energy": self.energy,
            "iterations": self.iterations,
            "accepted_flips": self.accepted_flips,
            "seed": self.seed,
            "method": self.method,
        }

    @classmethod
    def from_dict(cls, d):
        cfg = tuple(c == "1" for c in d["configuration"])
        return cls(cfg, float(d["energy"]), int(d["iterations"]), int(d["accepted_flips"]), int(d["seed"]), d["method"])


def _report(problem, x, iterations, accepted, seed, method):
    x = np.asarray(x, dtype=bool)
    return MinimizerReport(tuple(bool(b) for b in x), energy(problem, x), int(iterations), int(accepted), int(seed), method)


# ---------------------------------------------------------------------------
# exhaustive search


def brute_force_minimize(problem, chunk_bits=16):
    """Global minimiser over all 2^k configurations.

    Ties within a relative 1e-12 go to the lexicographically smallest bit
    string (first free cell most significant).
    """
    k = problem.n_free
    if k > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"{k} free cells exceeds the enumeration limit of {BRUTE_FORCE_LIMIT}")
    if k == 0:
        return _report(problem, np.zeros(0, dtype=bool), 1, 0, 0, "brute")
    W, U0, U1 = problem.matrices()
    lin = U1 - U0 + W.sum(axis=1)
    const = float(U0.sum())
    shifts = np.arange(k - 1, -1, -1)
    step = 1 << min(k, chunk_bits)
    energies = np.empty(1 << k)
    for lo in range(0, 1 << k, step):
        codes = np.arange(lo, lo + step, dtype=np.int64)
        X = ((codes[:, None] >> shifts) & 1).astype(float)
        energies[lo : lo + step] = const + X @ lin - np.einsum("ij,ij->i", X @ W, X)
    best = energies.min()
    tol = TIE_RTOL * (1.0 + abs(best))
    code = int(np.flatnonzero(energies <= best + tol)[0])
    x = ((code >> shifts) & 1).astype(bool)
    return _report(problem, x, 1 << k, 0, 0, "brute")


def mincut_minimize(problem):
    """Exact minimiser through an s-t minimum cut (the couplings are non-negative)."""
    import networkx as nx

    W, U0, U1 = problem.matrices()
    k = problem.n_free
    g = nx.DiGraph()
    g.add_nodes_from(["s", "t"])
    for i in range(k):
        g.add_edge("s", i, capacity=float(U0[i]))  # cut when i is unset
        g.add_edge(i, "t", capacity=float(U1[i]))  # cut when i is set
    ii, jj = np.nonzero(np.triu(W, 1) > 0)
    for i, j in zip(ii.tolist(), jj.tolist()):
        g.add_edge(i, j, capacity=float(W[i, j]))
        g.add_edge(j, i, capacity=float(W[i, j]))
    _, (source_side, _) = nx.minimum_cut(g, "s", "t")
    x = np.zeros(k, dtype=bool)
    x[[i for i in source_side if i != "s"]] = True
    x = _descend(W, U0, U1, x.astype(float)).astype(bool)  # polish round-off in the flow
    return _report(problem, x, 1, 0, 0, "mincut")


# ---------------------------------------------------------------------------
# annealing


@dataclass(frozen=True)
class AnnealSchedule:
    T0: float | None = None  # None: mean |flip delta| of a random configuration
    alpha: float = 0.95
    sweeps: int = 200

    def __post_init__(self):
        if self.T0 is not None and self.T0 < 0:
            raise DomainError("T0 must be non-negative")
        if not 0 < self.alpha < 1:
            raise DomainError("cooling factor must lie in (0, 1)")
        if self.sweeps < 0:
            raise DomainError("sweeps must be non-negative")


def _anneal_py(W, U0, U1, x, order, uniforms, temps):
    k = x.size
    field_ = W @ (1.0 - 2.0 * x)
    accepted = 0
    for sweep in range(temps.size):
        T = temps[sweep]
        for step in range(k):
            i = order[sweep, step]
            d = (1.0 - 2.0 * x[i]) * (U1[i] - U0[i] + field_[i])
            if d <= 0.0 or (T > 0.0 and uniforms[sweep, step] < math.exp(-d / T)):
                field_ -= 2.0 * (1.0 - 2.0 * x[i]) * W[:, i]
                x[i] = 1.0 - x[i]
                accepted += 1
    return x, accepted


_anneal = njit(cache=True)(_anneal_py) if njit is not None else _anneal_py


def _descend(W, U0, U1, x):
    """Best-improvement single flips until none lowers the energy (ties: lowest index)."""
    x = x.copy()
    scale = 1.0 + np.abs(U0).sum() + np.abs(U1).sum()
    for _ in range(100 * (x.size + 1)):
        d = _flip_deltas(W, U0, U1, x)
        i = int(np.argmin(d))
        if not d[i] < -TIE_RTOL * scale:
            break
        x[i] = 1.0 - x[i]
    return x


def local_search_minimize(problem, schedule=None, seed=0):
    """Simulated annealing over single flips followed by greedy descent."""
    schedule = schedule or AnnealSchedule()
    rng = np.random.default_rng(seed)
    k = problem.n_free
    W, U0, U1 = problem.matrices()
    x = rng.integers(0, 2, size=k).astype(float)
    T0 = schedule.T0
    if T0 is None:
        T0 = float(np.abs(_flip_deltas(W, U0, U1, x)).mean()) if k else 0.0
    temps = T0 * schedule.alpha ** np.arange(schedule.sweeps)
    order = np.argsort(rng.random((schedule.sweeps, k)), axis=1)
    uniforms = rng.random((schedule.sweeps, k))
    accepted = 0
    if k and schedule.sweeps:
        x, accepted = _anneal(np.ascontiguousarray(W), U0, U1, x, order, uniforms, temps)
    before = x.copy()
    x = _descend(W, U0, U1, x)
    accepted += int(np.count_nonzero(before != x))
    return _report(problem, x, schedule.sweeps * k, accepted, seed, "anneal")


# ---------------------------------------------------------------------------
# variational diagnostics


def variational_check(problem, config):
    """(is_subsolution, is_supersolution) against single-cell perturbations.

    Adding an unset cell A must not lower the energy (L(A, E) <= L(A, complement of E u A)),
    and removing a set cell must not lower it either.
    """
    x = _check_config(problem, config)
    W, U0, U1 = problem.matrices()
    d = _flip_deltas(W, U0, U1, x)
    tol = TIE_RTOL * (1.0 + abs(energy(problem, x)))
    set_ = x > 0.5
    return bool(np.all(d[set_] >= -tol)), bool(np.all(d[~set_] >= -tol))


@dataclass
class DensityReport:
    radii: list
    min_inner: list  # min over boundary cells of |E n B_r| / r^2
    min_outer: list  # same for the complement
    n_points: int

    def to_dict(self):
        return {"radii": self.radii, "min_inner": self.min_inner, "min_outer": self.min_outer, "n_points": self.n_points}

    def stable(self, factor=2.0):
        lo = np.minimum(self.min_inner, self.min_outer)
        return bool(lo.min() > 0 and lo.max() <= factor * lo.min())


def _disk_weights(cx, cy, r, m, sub=8):
    """Fraction of each cell of the (2m+1)^2 window around cell corner offsets
    covered by the disc of radius r centred at (cx, cy) in cell units."""
    off = np.arange(-m - 1, m + 1)
    u = (np.arange(sub) + 0.5) / sub
    X = off[None, :, None, None] + u[None, None, None, :]
    Y = off[:, None, None, None] + u[None, None, :, None]
    inside = (X - cx) ** 2 + (Y - cy) ** 2 <= r * r
    return off, inside.mean(axis=(2, 3))


def density_report(problem, config, radii):
    """Empirical density constants at boundary points of E inside Omega.

    Balls are centred at midpoints of interface edges with at least one free
    cell; only balls inside the frame are used. Cell coverage is integrated
    with 8 x 8 subsamples per cell.
    """
    bits = problem.grid(np.asarray(config, dtype=bool)).bits
    free = problem.free_mask
    H, W = bits.shape
    h = problem.h
    centres = []  # (row, col) of the midpoint in cell units
    vi, vj = np.nonzero((bits[:, 1:] != bits[:, :-1]) & (free[:, 1:] | free[:, :-1]))
    centres += [(i + 0.5, j + 1.0) for i, j in zip(vi, vj)]
    hi_, hj = np.nonzero((bits[1:, :] != bits[:-1, :]) & (free[1:, :] | free[:-1, :]))
    centres += [(i + 1.0, j + 0.5) for i, j in zip(hi_, hj)]
    if not centres:
        raise NoInteriorBalls("no boundary of E inside Omega")
    C = np.asarray(centres)
    inner, outer = [], []
    used = 0
    padded = np.pad(bits.astype(float), 1)
    for r in radii:
        rc = r / h
        ok = (C[:, 0] - rc >= 0) & (C[:, 0] + rc <= H) & (C[:, 1] - rc >= 0) & (C[:, 1] + rc <= W)
        if not ok.any():
            raise NoInteriorBalls(f"no boundary point admits a ball of radius {r}")
        m = int(math.ceil(rc)) + 1
        vin, vout = [], []
        for ci, cj in C[ok]:
            bi, bj = int(math.floor(ci)), int(math.floor(cj))
            off, wgt = _disk_weights(cj - bj, ci - bi, rc, m)
            rows = np.clip(bi + off + 1, 0, H + 1)
            cols = np.clip(bj + off + 1, 0, W + 1)
            win = padded[np.ix_(rows, cols)]
            vin.append(float((win * wgt).sum()))
            vout.append(float(((1.0 - win) * wgt).sum()))
        inner.append(min(vin) / rc ** 2)
        outer.append(min(vout) / rc ** 2)
        used = max(used, int(ok.sum()))
    return DensityReport([float(r) for r in radii], inner, outer, used)


def strip_comparison_test(problem, lower_row, upper_row, minimizer=None, slack=1):
    """Check that a minimiser respects strip exterior data.

    The exterior sets every fixed cell in rows < ``lower_row`` and clears
    every fixed cell in rows > ``upper_row``; the free cells of the minimiser
    must do the same up to ``slack`` rows.
    """
    rep = minimizer or mincut_minimize(problem)
    x = rep.bits
    rows = problem.free_cells[:, 0]
    must_set = rows < lower_row - slack
    must_clear = rows > upper_row + slack
    return bool(np.all(x[must_set]) and not np.any(x[must_clear]))


def strip_problem(H, W, free_rows, free_cols, lower_row, upper_row, rng=None, h=1.0, s=0.5):
    """Frame with strip exterior data: set below ``lower_row``, clear above ``upper_row``,
    random in between; the tail is the half-space below the middle of the strip."""
    rng = np.random.default_rng(rng)
    free = np.zeros((H, W), dtype=bool)
    free[free_rows[0] : free_rows[1], free_cols[0] : free_cols[1]] = True
    rows = np.arange(H)[:, None] * np.ones((1, W), dtype=int)
    ext = rows < lower_row
    middle = (rows >= lower_row) & (rows <= upper_row)
    ext |= middle & (rng.random((H, W)) < 0.5)
    level = 0.5 * (lower_row + upper_row + 1) * h
    return MinimizationProblem(free, ext, (0.0, 0.0), h, HalfSpace((0.0, 1.0), level), K.FracParams(2, s))


def random_problem(rng, size=20, free=4, margin=8, s=0.5, h=1.0):
    """Random window with mixed exterior data and a free square at the centre.

    The exterior is a random half-plane passing near the window centre, with a
    disc away from Omega either added or removed; the tail continues the
    half-plane.
    """
    rng = np.random.default_rng(rng)
    size = max(size, free + 2 * margin)
    c = 0.5 * size * h
    ang = rng.uniform(0, 2 * np.pi)
    nrm = np.array([math.cos(ang), math.sin(ang)])
    off = float(nrm @ np.array([c, c]) + rng.uniform(-2.5, 2.5) * h)
    ys, xs = (np.mgrid[0:size, 0:size] + 0.5) * h
    P = np.stack([xs, ys], axis=-1)
    ext = P @ nrm <= off
    phi = rng.uniform(0, 2 * np.pi)
    centre = c + rng.uniform(6, 8) * h * np.array([math.cos(phi), math.sin(phi)])
    disc = np.hypot(*(P - centre).transpose(2, 0, 1)) < rng.uniform(2, 3.5) * h
    ext = ext | disc if rng.random() < 0.5 else ext & ~disc
    mask = np.zeros((size, size), dtype=bool)
    lo = (size - free) // 2
    mask[lo : lo + free, lo : lo + free] = True
    return MinimizationProblem(mask, ext, (0.0, 0.0), h, HalfSpace(tuple(nrm), off), K.FracParams(2, s))


def write_pgm(path, problem, config):
    """Binary portable graymap of the frame, set cells black, top row first."""
    bits = problem.grid(np.asarray(config, dtype=bool)).bits[::-1]
    H, W = bits.shape
    img = np.where(bits, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
