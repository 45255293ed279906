"""Command-line driver: one subcommand per module, reproducible outputs.

Exit codes: 0 success, 1 malformed input, 2 tolerance or oracle failure,
3 resource cap.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import curvature as C
from . import extension as X
from . import fractal as F
from . import kernel as K
from . import minimizer as M
from . import perimeter as P
from .errors import (
    Inconclusive,
    NlperimError,
    NoCancellation,
    ResolutionError,
    ResourceCapExceeded,
    ToleranceNotMet,
    TooLarge,
)
from .geometry import (
    Ball,
    Box,
    HalfSpace,
    IntervalSet,
    Polygon,
    koch_snowflake,
    make_interval_set,
    shape_from_dict,
)

EXIT_OK, EXIT_INPUT, EXIT_TOLERANCE, EXIT_RESOURCE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class OracleFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# shape mini-language


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def parse_shape(spec):
    """``ball:cx,cy,r``, ``halfspace:nx,ny,c``, ``box:x0,y0,x1,y1``, ``interval:a,b;c,d``,
    ``koch:k,side``, ``polygon:x,y;x,y;...`` or a JSON file path."""
    if spec is None:
        return None
    if spec.endswith(".json") or os.path.isfile(spec):
        with open(spec, encoding="utf-8") as fh:
            return shape_from_dict(json.load(fh))
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "ball":
        v = _floats(rest)
        if len(v) != 3:
            raise UsageError("ball takes cx,cy,r")
        return Ball((v[0], v[1]), v[2])
    if kind == "halfspace":
        v = _floats(rest)
        if len(v) != 3:
            raise UsageError("halfspace takes nx,ny,c")
        return HalfSpace((v[0], v[1]), v[2])
    if kind == "box":
        v = _floats(rest)
        if len(v) != 4:
            raise UsageError("box takes x0,y0,x1,y1")
        return Box(*v)
    if kind == "interval":
        pairs = [_floats(p) for p in rest.split(";") if p.strip()]
        if not pairs or any(len(p) != 2 for p in pairs):
            raise UsageError("interval takes a,b;c,d;...")
        return make_interval_set([tuple(p) for p in pairs])
    if kind == "koch":
        v = _floats(rest) if rest else []
        k = int(v[0]) if v else 5
        side = v[1] if len(v) > 1 else 1.0
        return koch_snowflake(k, side)
    if kind == "polygon":
        pts = [tuple(_floats(p)) for p in rest.split(";") if p.strip()]
        return Polygon(tuple(pts))
    raise UsageError(f"unknown shape {spec!r}")


# ---------------------------------------------------------------------------
# output


def _workers(args):
    env = os.environ.get("NLPERIM_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise UsageError("NLPERIM_WORKERS must be an integer") from exc
    return max(1, int(args.workers))


def _pmap(fn, items, workers):
    """Ordered map; the result does not depend on the worker count."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def run_config(args):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "workers", "out")}
    return cfg


def input_hash(cfg):
    h = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode("utf-8"))
    for key in ("set", "omega", "problem"):
        path = cfg.get(key)
        if isinstance(path, str) and os.path.isfile(path):
            with open(path, "rb") as fh:
                h.update(fh.read())
    return h.hexdigest()


def _emit(args, result, rows=None, header=None):
    cfg = run_config(args)
    digest = input_hash(cfg)
    if args.format == "csv" and rows is not None:
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(cfg, sort_keys=True, default=str) + "\n")
        buf.write("# input_hash: " + digest + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
        text = buf.getvalue()
    else:
        doc = {"config": cfg, "input_hash": digest, "result": result}
        text = json.dumps(doc, sort_keys=True, indent=2, default=_json_default) + "\n"
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _quad(args):
    return K.QuadratureSpec(rel_tol=args.rel_tol, max_subdivision_depth=args.max_depth)


def _n_of(E):
    return 1 if isinstance(E, IntervalSet) else 2


# ---------------------------------------------------------------------------
# subcommands


def cmd_perimeter(args):
    E = parse_shape(args.set)
    omega = None if args.global_ else parse_shape(args.omega)
    if omega is None and not args.global_ and args.omega is None:
        raise UsageError("give --omega or --global")
    br = P.s_perimeter(E, omega, K.FracParams(_n_of(E), args.s), _quad(args))
    res = br.to_dict()
    _emit(args, res, [(res["local"], res["nonlocal"], res["total"], res["error"])], ["local", "nonlocal", "total", "error"])
    if args.tol is not None and br.error > args.tol:
        raise ToleranceNotMet(f"error estimate {br.error:.3g} exceeds {args.tol:.3g}")


def _asym_row(job):
    E, omega, s, n, quad = job
    br = P.s_perimeter(E, omega, K.FracParams(n, s), quad)
    return br


def cmd_asymptotics(args):
    E = parse_shape(args.set)
    omega = parse_shape(args.omega)
    s_list = _floats(args.s_list)
    n = _n_of(E)
    quad = _quad(args)
    table = P.AsymptoticTable()
    target = K.omega(n - 1) * P.classical_perimeter(E, omega)
    brs = _pmap(_asym_row, [(E, omega, s, n, quad) for s in s_list], _workers(args))
    for s, br in zip(s_list, brs):
        val = br.local if args.mode == "local" else br.total
        table.rows.append((s, (1 - s) * val, target, (1 - s) * br.error))
    _emit(args, {"rows": table.rows}, table.rows, ["s", "scaled_value", "target", "error"])
    if args.tol is not None and abs(table.rows[-1][1] - target) > args.tol * abs(target):
        raise ToleranceNotMet("last row misses the classical target")


def cmd_curvature(args):
    E = parse_shape(args.set)
    x = _floats(args.point)
    params = K.FracParams(2, args.s)
    res = C.fmc_pv(E, np.asarray(x), params, _quad(args), analytic=not args.generic)
    out = json.loads(res.to_json())
    if isinstance(E, Ball):
        ref = C.ball_curvature_closed_form(args.s, E.radius)
        out["closed_form"] = ref
        out["relative_error"] = abs(res.value - ref) / abs(ref)
    _emit(args, out, [(r, v) for r, v in res.pv_trace] + [("limit", res.value)], ["rho", "value"])
    if args.oracle and "closed_form" in out and out["relative_error"] > args.oracle_tol:
        raise OracleFailure(f"closed-form mismatch {out['relative_error']:.3g}")


def _anneal_job(job):
    problem, seed, sweeps = job
    return M.local_search_minimize(problem, M.AnnealSchedule(sweeps=sweeps), seed)


def cmd_minimize(args):
    if args.problem:
        with open(args.problem, encoding="utf-8") as fh:
            problem = M.MinimizationProblem.from_dict(json.load(fh))
    else:
        problem = M.random_problem(args.seed, size=args.size, free=args.free, s=args.s)
    seeds = [args.seed + k for k in range(args.seeds)]
    reports = _pmap(_anneal_job, [(problem, sd, args.sweeps) for sd in seeds], _workers(args))
    best = min(reports, key=lambda r: (r.energy, r.seed))
    out = {
        "n_free": problem.n_free,
        "best": best.to_dict(),
        "energies": [r.energy for r in reports],
        "seeds": seeds,
    }
    mismatch = False
    if problem.n_free <= 16:
        exact = M.brute_force_minimize(problem)
        match = abs(exact.energy - best.energy) <= 1e-9 * max(1.0, abs(exact.energy))
        out["oracle_energy"] = exact.energy
        out["oracle_match"] = bool(match)
        mismatch = not match
    if args.pgm:
        M.write_pgm(args.pgm, problem, best.bits)
    rows = [(r.seed, r.energy) for r in reports]
    _emit(args, out, rows, ["seed", "energy"])
    if mismatch:
        raise OracleFailure("annealing missed the exhaustive optimum")


def cmd_extension(args):
    if args.mode == "phi":
        E = parse_shape(args.set)
        r_list = _floats(args.r_list)
        tail = parse_shape(args.tail) if args.tail else None
        tr = X.phi_trace(E, r_list, K.FracParams(2, args.s), tail=tail)
        out = {"rows": tr.rows, "spread": tr.spread()}
        _emit(args, out, tr.rows, ["r", "phi"])
        if args.tol is not None and tr.spread() > args.tol:
            raise ToleranceNotMet("trace spread exceeds tolerance")
    else:
        xs = np.linspace(-args.window, args.window, args.samples, endpoint=False)
        u = np.exp(-xs ** 2)
        i0 = int(np.argmin(np.abs(xs - args.x)))
        spec = float(X.frac_laplacian_fourier(u, args.s, xs[1] - xs[0])[i0])
        direct = X.frac_laplacian_direct(lambda t: np.exp(-np.asarray(t) ** 2), float(xs[i0]), args.s)
        rel = abs(direct - spec) / abs(spec)
        out = {"x": float(xs[i0]), "direct": direct, "fourier": spec, "relative_gap": rel, "c_constant": X.c_constant(1, args.s)}
        _emit(args, out, [(out["x"], direct, spec, rel)], ["x", "direct", "fourier", "relative_gap"])
        if args.tol is not None and rel > args.tol:
            raise ToleranceNotMet("direct and spectral evaluations disagree")


def cmd_fractal(args):
    if args.target == "koch":
        E = koch_snowflake(args.k, args.side)
    else:
        E = parse_shape(args.set)
    if args.mode == "boxcount":
        deltas = _floats(args.deltas) if args.deltas else [3.0 ** -j for j in range(1, 7)]
        tr = F.box_count(E, deltas)
        est = F.dimension_fit(tr)
        out = {"dimension": est.value, "stderr": est.stderr, "fit_range": est.fit_range, "rows": tr.rows}
        _emit(args, out, tr.rows, ["delta", "count"])
    elif args.mode == "dimf":
        s_list = _floats(args.s_list) if args.s_list else list(np.round(np.arange(0.64, 0.85, 0.02), 2))
        est = F.dim_f_estimate(E, None, s_list, level=args.level)
        out = {"dimension": est.value, "stderr": est.stderr, "fit_range": est.fit_range, "diagnostics": est.diagnostics}
        rows = list(zip(est.diagnostics.get("s", []), est.diagnostics.get("increment_ratio", [])))
        _emit(args, out, rows, ["s", "increment_ratio"])
    else:
        s_list = _floats(args.s_list) if args.s_list else [0.5, 0.8]
        res = [F.koch_series_bound(s, args.terms).to_dict() for s in s_list]
        rows = [(r["s"], r["ratio"], r["partial_sums"][-1]) for r in res]
        _emit(args, {"series": res}, rows, ["s", "ratio", "last_partial_sum"])


# ---------------------------------------------------------------------------
# parser


def _common(p, s_required=True):
    p.add_argument("--s", type=float, required=s_required, help="fractional order in (0, 1)")
    p.add_argument("--seed", type=int, default=0, help="random seed, echoed in the output")
    p.add_argument("--rel-tol", type=float, default=1e-4)
    p.add_argument("--max-depth", type=int, default=5)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    p.add_argument("--workers", type=int, default=1, help="worker processes (NLPERIM_WORKERS overrides)")


def build_parser():
    ap = _Parser(prog="nlperim", description="Nonlocal perimeter experiments.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("perimeter", help="P_s(E, Omega) with its local/nonlocal split")
    p.add_argument("--set", required=True)
    p.add_argument("--omega")
    p.add_argument("--global", dest="global_", action="store_true", help="whole space")
    p.add_argument("--tol", type=float, default=None)
    _common(p)
    p.set_defaults(func=cmd_perimeter)

    p = sub.add_parser("asymptotics", help="(1 - s) P_s against the classical perimeter")
    p.add_argument("--set", required=True)
    p.add_argument("--omega")
    p.add_argument("--s-list", required=True)
    p.add_argument("--mode", choices=("total", "local"), default="total")
    p.add_argument("--tol", type=float, default=None)
    _common(p, s_required=False)
    p.set_defaults(func=cmd_asymptotics, format="csv")

    p = sub.add_parser("curvature", help="nonlocal mean curvature at a boundary point")
    p.add_argument("--set", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("--generic", action="store_true", help="skip the symmetry shortcut")
    p.add_argument("--oracle", action="store_true", help="compare with the closed form where known")
    p.add_argument("--oracle-tol", type=float, default=1e-3)
    _common(p)
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("minimize", help="discrete s-minimal sets on a pixel frame")
    p.add_argument("--problem", help="problem JSON (default: a random problem from --seed)")
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--sweeps", type=int, default=200)
    p.add_argument("--size", type=int, default=20)
    p.add_argument("--free", type=int, default=4)
    p.add_argument("--pgm", default=None)
    _common(p, s_required=False)
    p.set_defaults(func=cmd_minimize, s=0.5)

    p = sub.add_parser("extension", help="monotonicity trace or fractional Laplacian cross-check")
    p.add_argument("mode", choices=("phi", "laplacian"))
    p.add_argument("--set")
    p.add_argument("--tail")
    p.add_argument("--r-list", default="0.25,0.5,0.75,1.0")
    p.add_argument("--x", type=float, default=0.0)
    p.add_argument("--window", type=float, default=200.0)
    p.add_argument("--samples", type=int, default=2 ** 17)
    p.add_argument("--tol", type=float, default=None)
    _common(p)
    p.set_defaults(func=cmd_extension)

    p = sub.add_parser("fractal", help="box counting, Dim_F and the Koch series")
    p.add_argument("target", choices=("koch", "set"))
    p.add_argument("--set")
    p.add_argument("--k", type=int, default=7)
    p.add_argument("--side", type=float, default=1.0)
    p.add_argument("--mode", choices=("boxcount", "dimf", "series"), default="boxcount")
    p.add_argument("--deltas")
    p.add_argument("--s-list")
    p.add_argument("--level", type=int, default=7)
    p.add_argument("--terms", type=int, default=20)
    _common(p, s_required=False)
    p.set_defaults(func=cmd_fractal)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.command == "extension" and args.mode == "phi" and not args.set:
            raise UsageError("extension phi needs --set")
        if args.command == "fractal" and args.target == "set" and not args.set:
            raise UsageError("fractal set needs --set")
        args.func(args)
    except (ResourceCapExceeded, ResolutionError, TooLarge, MemoryError) as exc:
        print(f"nlperim: resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ToleranceNotMet, NoCancellation, Inconclusive, OracleFailure) as exc:
        print(f"nlperim: tolerance: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except (UsageError, NlperimError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"nlperim: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
