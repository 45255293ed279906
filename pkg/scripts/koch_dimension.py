"""Box-counting dimension and the P_s divergence threshold of the Koch snowflake."""
import argparse

import numpy as np

from nlperim import fractal as F
from nlperim import geometry as G


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=7, help="generation for box counting")
    ap.add_argument("--ladder-k", type=int, default=9, help="generation for the truncation ladder")
    ap.add_argument("--plot", default=None, help="write a log-log plot of the box counts here")
    args = ap.parse_args()

    tr = F.box_count(G.koch_snowflake(args.k), [3.0 ** -j for j in range(1, 7)])
    est = F.dimension_fit(tr)
    print(tr.to_csv())
    print(f"box dimension {est.value:.4f} +- {est.stderr:.4f} (log 4 / log 3 = {F.KOCH_DIMENSION:.5f})")

    s_list = np.round(np.arange(0.64, 0.85, 0.02), 2)
    dim = F.dim_f_estimate(G.koch_snowflake(args.ladder_k), None, s_list)
    for s, r in zip(dim.diagnostics["s"], dim.diagnostics["increment_ratio"]):
        print(f"s={s:.2f} increment ratio {r:.4f} {'divergent' if r >= 1 else 'convergent'}")
    print(f"flip between {dim.diagnostics['s_convergent']} and {dim.diagnostics['s_divergent']}, "
          f"crossing {dim.diagnostics['s_crossing']:.3f} (threshold {F.KOCH_THRESHOLD:.4f})")

    for s in (0.5, 0.8, F.KOCH_THRESHOLD):
        ser = F.koch_series_bound(s, 20)
        print(f"series s={s:.4f} ratio {ser.ratio:.6f} last partial sum {ser.partial_sums[-1]:.4e}")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(4, 3))
        ax.loglog(1 / tr.deltas, tr.counts, "o-")
        ax.set_xlabel("1 / delta")
        ax.set_ylabel("boxes")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)


if __name__ == "__main__":
    main()
