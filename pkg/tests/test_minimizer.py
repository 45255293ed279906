import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlperim import minimizer as M
from nlperim.errors import CellNotFree, SizeMismatch, TooLarge
from nlperim.geometry import HalfSpace


def blank(H=10, W=10, cells=((4, 4),), tail=None):
    free = np.zeros((H, W), dtype=bool)
    for i, j in cells:
        free[i, j] = True
    return M.MinimizationProblem(free, np.zeros((H, W), dtype=bool), tail=tail)


def half_plane_problem(H=16, W=16, free=(6, 10), level=8):
    """Set below row ``level``; free square in the middle; tail continues the half-plane."""
    mask = np.zeros((H, W), dtype=bool)
    mask[free[0] : free[1], free[0] : free[1]] = True
    ext = np.arange(H)[:, None] < level
    ext = np.broadcast_to(ext, (H, W)).copy()
    return M.MinimizationProblem(mask, ext, tail=HalfSpace((0.0, 1.0), float(level)))


def continuation(pb, level=8):
    return pb.free_cells[:, 0] < level


def mirror_index(pb):
    cells = pb.free_cells
    W = pb.shape[1]
    lookup = {tuple(c): k for k, c in enumerate(cells.tolist())}
    return np.array([lookup[(i, W - 1 - j)] for i, j in cells.tolist()])


def test_empty_problem_has_zero_energy():
    pb = blank(cells=[(4, 4), (4, 5), (5, 4)])
    assert M.energy(pb, [0, 0, 0]) == 0.0
    assert M.energy(pb, [1, 0, 0]) > 0


def test_lone_cell_prefers_empty():
    rep = M.brute_force_minimize(blank())
    assert rep.configuration == (False,) and rep.energy == 0.0


def test_bad_inputs():
    pb = blank()
    with pytest.raises(SizeMismatch):
        M.energy(pb, [0, 1])
    with pytest.raises(CellNotFree):
        M.energy_delta_flip(pb, [0], (0, 0))
    with pytest.raises(SizeMismatch):
        M.MinimizationProblem(np.zeros((3, 3)), np.zeros((3, 4)))
    big = np.zeros((8, 8), dtype=bool)
    big[:5, :5] = True
    with pytest.raises(TooLarge):
        M.brute_force_minimize(M.MinimizationProblem(big, np.zeros_like(big)))


@settings(max_examples=25)
@given(st.integers(0, 2 ** 16 - 1), st.integers(0, 15))
def test_flip_delta_matches_recomputation(code, cell):
    pb = M.random_problem(3)
    x = np.array([(code >> k) & 1 for k in range(16)], dtype=float)
    d = M.energy_delta_flip(pb, x, cell)
    y = x.copy()
    y[cell] = 1 - y[cell]
    assert d == pytest.approx(M.energy(pb, y) - M.energy(pb, x), abs=1e-9)
    back = M.energy_delta_flip(pb, y, cell)
    assert abs(d + back) <= 1e-12 * max(1.0, abs(d))


def test_half_plane_continuation_is_locally_minimal():
    pb = half_plane_problem()
    x = continuation(pb)
    e = M.energy(pb, x)
    for k in range(pb.n_free):
        assert M.energy_delta_flip(pb, x, k) >= -1e-9 * e
    assert M.variational_check(pb, x) == (True, True)


def test_half_plane_minimizer_is_continuation():
    pb = half_plane_problem(free=(6, 10))
    assert np.array_equal(M.brute_force_minimize(pb).bits, continuation(pb))
    assert np.array_equal(M.mincut_minimize(pb).bits, continuation(pb))


def test_strip_minimizer_is_monotone():
    H, W = 12, 20
    free = np.zeros((H, W), dtype=bool)
    free[6, 6:14] = True
    ext = np.zeros((H, W), dtype=bool)
    ext[:, :6] = True
    pb = M.MinimizationProblem(free, ext, tail=HalfSpace((1.0, 0.0), 6.0))
    bits = M.brute_force_minimize(pb).bits
    k = int(bits.sum())
    assert bits.tolist() == [True] * k + [False] * (8 - k)


def test_mirror_symmetric_problem():
    rng = np.random.default_rng(4)
    H, W = 14, 14
    half = rng.random((H, W // 2)) < 0.4
    ext = np.concatenate([half, half[:, ::-1]], axis=1)
    free = np.zeros((H, W), dtype=bool)
    free[5:9, 5:9] = True
    pb = M.MinimizationProblem(free, ext)
    idx = mirror_index(pb)
    rep = M.brute_force_minimize(pb)
    assert M.energy(pb, rep.bits[idx]) == pytest.approx(rep.energy, rel=1e-12)
    x = rng.random(pb.n_free) < 0.5
    assert M.energy(pb, x[idx]) == pytest.approx(M.energy(pb, x), rel=1e-12)


@pytest.mark.parametrize("k", range(6))
def test_mincut_matches_brute_force(k):
    pb = M.random_problem(1000 + k)
    assert M.mincut_minimize(pb).energy == pytest.approx(M.brute_force_minimize(pb).energy, rel=1e-10)


def test_local_search_seeds():
    pb = M.random_problem(11)
    exact = M.brute_force_minimize(pb).energy
    found = [M.local_search_minimize(pb, seed=sd).energy for sd in range(50)]
    hits = sum(abs(e - exact) <= 1e-9 * max(1.0, exact) for e in found)
    assert hits >= 48 and min(found) == pytest.approx(exact, rel=1e-9)


def test_local_search_is_deterministic():
    pb = M.random_problem(5)
    assert M.local_search_minimize(pb, seed=3) == M.local_search_minimize(pb, seed=3)


def test_greedy_descent_never_increases():
    pb = M.random_problem(6)
    W, U0, U1 = pb.matrices()
    rng = np.random.default_rng(0)
    x = rng.integers(0, 2, pb.n_free).astype(float)
    energies = [M.energy(pb, x)]
    while True:
        d = M._flip_deltas(W, U0, U1, x)
        i = int(np.argmin(d))
        if d[i] >= 0:
            break
        x[i] = 1 - x[i]
        energies.append(M.energy(pb, x))
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    rep = M.local_search_minimize(pb, M.AnnealSchedule(T0=0.0, sweeps=5), seed=1)
    assert M.variational_check(pb, rep.bits) == (True, True)


def test_variational_check_detects_improving_flip():
    pb = M.random_problem(7)
    rep = M.brute_force_minimize(pb)
    assert M.variational_check(pb, rep.bits) == (True, True)
    worse = rep.bits.copy()
    worse[0] = ~worse[0]
    assert M.variational_check(pb, worse) != (True, True)


def test_density_half_plane():
    pb = M.MinimizationProblem(*_wide_half_plane())
    d = M.density_report(pb, continuation(pb, 20), [4, 8])
    for lo in (d.min_inner, d.min_outer):
        assert np.allclose(lo, math.pi / 2, rtol=0.05)


def _wide_half_plane():
    H = W = 40
    mask = np.zeros((H, W), dtype=bool)
    mask[10:30, 10:30] = True
    ext = np.broadcast_to(np.arange(H)[:, None] < 20, (H, W)).copy()
    return mask, ext, (0.0, 0.0), 1.0, HalfSpace((0.0, 1.0), 20.0)


def test_density_bounded_by_full_ball():
    pb = M.random_problem(8)
    d = M.density_report(pb, M.brute_force_minimize(pb).bits, [3, 5])
    for lo in (d.min_inner, d.min_outer):
        assert all(0 < v < math.pi for v in lo)


def test_strip_comparison_cases():
    rng = np.random.default_rng(0)
    flat = M.strip_problem(20, 20, (6, 14), (6, 14), 10, 10, rng)
    rep = M.mincut_minimize(flat)
    assert np.array_equal(rep.bits, flat.free_cells[:, 0] < 10)
    assert M.strip_comparison_test(M.strip_problem(20, 20, (6, 14), (6, 14), 9, 11, rng), 9, 11)
    full = M.MinimizationProblem(flat.free_mask, np.ones(flat.shape, dtype=bool), tail="all")
    assert M.mincut_minimize(full).bits.all()
    assert M.energy(full, np.ones(full.n_free)) == pytest.approx(0.0, abs=1e-12)


def test_problem_roundtrip_and_complement():
    pb = M.random_problem(9)
    back = M.MinimizationProblem.from_dict(pb.to_dict())
    x = M.brute_force_minimize(pb).bits
    assert M.energy(back, x) == pytest.approx(M.energy(pb, x), rel=1e-12)
    # complement duality: J(E) for the problem equals J(complement) for the complemented problem
    assert M.energy(pb.complemented(), ~x) == pytest.approx(M.energy(pb, x), rel=1e-9)


def test_report_roundtrip():
    rep = M.local_search_minimize(M.random_problem(2), seed=4)
    assert M.MinimizerReport.from_dict(rep.to_dict()) == rep


def test_write_pgm(tmp_path):
    pb = M.random_problem(1)
    out = tmp_path / "m.pgm"
    M.write_pgm(out, pb, np.zeros(pb.n_free, dtype=bool))
    data = out.read_bytes()
    H, W = pb.shape
    assert data.startswith(f"P5\n{W} {H}\n255\n".encode()) and len(data) == len(f"P5\n{W} {H}\n255\n") + H * W
