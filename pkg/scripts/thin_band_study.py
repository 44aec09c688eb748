"""Thin-band deficit fit on successively finer grids.

    python scripts/thin_band_study.py --weight bump --sizes 64 128 256
"""
import argparse

import numpy as np

from dbarlab.harness import thin_band
from dbarlab.torus_grid import make_grid
from dbarlab.weights import weight_from_catalog


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weight", default="siny", choices=("siny", "bump"))
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--tau-min", type=float, default=0.01, help="as a fraction of osc")
    ap.add_argument("--tau-max", type=float, default=0.1, help="as a fraction of osc")
    ap.add_argument("--points", type=int, default=6)
    args = ap.parse_args()

    print("n,kept,dropped,exponent,coeff_ratio,half_width_ratio")
    for n in args.sizes:
        w = weight_from_catalog(args.weight, {}, make_grid(n, n))
        taus = np.geomspace(args.tau_min, args.tau_max, args.points) * w.osc
        r = thin_band(w, taus)
        hw = np.asarray(r.half_width) / np.asarray(r.half_width_predicted)
        print(f"{n},{len(r.tau_list)},{len(r.dropped)},{r.fitted_exponent:.4f},"
              f"{r.fitted_coeff_ratio:.4f},{hw.mean():.3f}")


if __name__ == "__main__":
    main()
