"""(1 - s) P_s against the classical target for a few sets."""
import argparse

from nlperim import geometry as G
from nlperim import perimeter as P


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--s-list", default="0.5,0.7,0.9,0.95,0.99,0.999")
    args = ap.parse_args()
    s_list = [float(v) for v in args.s_list.split(",")]
    print("interval (0,1), whole line")
    print(P.asymptotic_scan(G.make_interval_set([(0, 1)]), None, s_list).to_csv())
    print("counterexample set a=1/2, K=40: (1-s) P_s grows without bound")
    E = G.counterexample_set(0.5, 40)
    for s in s_list:
        print(f"{s},{(1 - s) * P.s_perimeter_global_1d(E, s)!r}")
    print("\nunit disc in B_2 (target 4 pi)")
    print(P.asymptotic_scan(G.Ball((0.0, 0.0), 1.0), G.Ball((0.0, 0.0), 2.0), [s for s in s_list if s <= 0.95]).to_csv())


if __name__ == "__main__":
    main()
