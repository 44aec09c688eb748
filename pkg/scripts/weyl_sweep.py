"""Weyl ratio for sin y over a grid of (tau, h).

A single dense spectrum per h serves every tau; counts come with the
1-D oracle count next to them.

    python scripts/weyl_sweep.py --tau 0.1 0.25 0.5 1.0 --h 0.2 0.125 0.08
"""
import argparse
import math

from dbarlab.contact import flux_volumes
from dbarlab.dbar_op import MAX_TAU_OVER_H, count_below
from dbarlab.harness import default_mode_count, low_modes
from dbarlab.obstacle import solve_psor
from dbarlab.oracle import oracle_for_weight
from dbarlab.torus_grid import make_grid
from dbarlab.weights import weight_from_catalog


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--tau", type=float, nargs="+", default=[0.1, 0.25, 0.5, 1.0])
    ap.add_argument("--h", type=float, nargs="+", default=[0.2, 0.125, 0.08])
    args = ap.parse_args()

    w = weight_from_catalog("siny", {}, make_grid(args.n, args.n))
    v_plus = {t: flux_volumes(solve_psor(w, t), w)[0] for t in args.tau}
    print("h,tau,n_observed,n_oracle,prediction,ratio")
    for h in args.h:
        k = max(default_mode_count(w, t, h) for t in args.tau)
        s = low_modes(w, h, k).spectrum()
        orc = oracle_for_weight(w, h)
        for t in args.tau:
            if t / h > MAX_TAU_OVER_H:
                continue
            thr = math.exp(-t / h)
            n = count_below(s, thr)
            pred = v_plus[t] / (2 * math.pi * h)
            print(f"{h:g},{t:g},{n},{count_below(orc, thr)},{pred:.3f},{n / pred:.3f}")


if __name__ == "__main__":
    main()
