"""Weyl ratio for y-only weights at small h using the 1-D oracle alone.

The oracle costs O(k_max * ny^3), so h far below the reach of the dense
2-D spectrum is cheap, but tau/h must stay below the precision limit.

    python scripts/oracle_weyl.py --tau 0.5 --h 0.1 0.05 0.03 0.02
"""
import argparse
import math

from dbarlab.contact import flux_volumes
from dbarlab.dbar_op import MAX_TAU_OVER_H, count_below
from dbarlab.obstacle import solve_psor
from dbarlab.oracle import oracle_for_weight
from dbarlab.torus_grid import make_grid
from dbarlab.weights import weight_from_catalog


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128)
    ap.add_argument("--tau", type=float, default=0.5)
    ap.add_argument("--h", type=float, nargs="+", default=[0.1, 0.05, 0.03, 0.025])
    args = ap.parse_args()

    w = weight_from_catalog("siny", {}, make_grid(args.n, args.n))
    v_plus = flux_volumes(solve_psor(w, args.tau), w)[0]
    print("h,n_oracle,prediction,ratio")
    for h in args.h:
        if args.tau / h > MAX_TAU_OVER_H:
            print(f"{h:g},skipped: tau/h above {MAX_TAU_OVER_H:g}")
            continue
        n = count_below(oracle_for_weight(w, h), math.exp(-args.tau / h))
        pred = v_plus / (2 * math.pi * h)
        print(f"{h:g},{n},{pred:.3f},{n / pred:.3f}")


if __name__ == "__main__":
    main()
