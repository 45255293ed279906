"""Annealing against exhaustive search on the seeded corpus of small problems."""
import argparse

import numpy as np

from nlperim import minimizer as M


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--problems", type=int, default=50)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    single = best = 0
    print("problem,n_free,exact,best_anneal,mincut,variational,min_density")
    for k in range(args.problems):
        pb = M.random_problem(k)
        exact = M.brute_force_minimize(pb)
        runs = [M.local_search_minimize(pb, seed=sd) for sd in range(args.seeds)]
        cut = M.mincut_minimize(pb)
        tol = 1e-9 * max(1.0, exact.energy)
        single += abs(runs[0].energy - exact.energy) <= tol
        top = min(r.energy for r in runs)
        best += abs(top - exact.energy) <= tol
        d = M.density_report(pb, exact.bits, [3, 5, 8])
        dens = float(np.minimum(d.min_inner, d.min_outer).min())
        print(f"{k},{pb.n_free},{exact.energy:.10g},{top:.10g},{cut.energy:.10g},{M.variational_check(pb, exact.bits)},{dens:.4f}")
    print(f"# single seed matches {single}/{args.problems}, best of {args.seeds} seeds {best}/{args.problems}")


if __name__ == "__main__":
    main()
