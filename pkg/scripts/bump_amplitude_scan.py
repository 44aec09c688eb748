"""Weyl ratio of the bump weight across amplitudes, tau/osc and h.

Scaling phi by a is the same as replacing h by h/a, so larger amplitudes
reach the semiclassical regime at desk-scale h.  One dense spectrum per
(amplitude, h) serves every tau.

    python scripts/bump_amplitude_scan.py --amplitudes 1 3 6 --h 0.12 0.08
"""
import argparse
import math

from dbarlab.contact import flux_volumes
from dbarlab.dbar_op import MAX_TAU_OVER_H
from dbarlab.harness import low_modes
from dbarlab.obstacle import solve_psor
from dbarlab.torus_grid import make_grid
from dbarlab.weights import weight_from_catalog


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--amplitudes", type=float, nargs="+", default=[1.0, 3.0, 6.0])
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.1, 0.2, 0.3, 0.5])
    ap.add_argument("--h", type=float, nargs="+", default=[0.12, 0.08])
    ap.add_argument("--modes", type=int, default=96)
    args = ap.parse_args()

    g = make_grid(args.n, args.n)
    print("amplitude,osc,h,tau_over_osc,n_observed,prediction,ratio")
    for a in args.amplitudes:
        w = weight_from_catalog("bump", {"amplitude": a}, g)
        v_plus = {c: flux_volumes(solve_psor(w, c * w.osc), w)[0] for c in args.fractions}
        for h in args.h:
            s = low_modes(w, h, args.modes).svals
            for c in args.fractions:
                tau = c * w.osc
                if tau / h > MAX_TAU_OVER_H:
                    continue
                n = int((s <= math.exp(-tau / h)).sum())
                pred = v_plus[c] / (2 * math.pi * h)
                note = "" if n < s.size else "  # saturated: raise --modes"
                print(f"{a:g},{w.osc:.6g},{h:g},{c:g},{n},{pred:.3f},{n / pred:.3f}{note}")


if __name__ == "__main__":
    main()
