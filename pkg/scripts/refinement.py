"""Free-boundary area, separation margin and second differences of psi under
grid refinement.

    python scripts/refinement.py --weight siny --tau 0.5 --sizes 32 64 128 256
"""
import argparse
import json

from dbarlab.contact import refinement_study
from dbarlab.torus_grid import make_grid
from dbarlab.weights import weight_from_catalog


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--weight", default="siny", choices=("siny", "bump"))
    ap.add_argument("--tau", type=float, default=0.5)
    ap.add_argument("--osc", action="store_true", help="read --tau as a multiple of osc")
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    args = ap.parse_args()

    rep = refinement_study(
        lambda n: weight_from_catalog(args.weight, {}, make_grid(n, n)),
        lambda w: args.tau * w.osc if args.osc else args.tau,
        sizes=tuple(args.sizes))
    d = rep.to_json()
    d.pop("reports")
    print(json.dumps(d, indent=2))


if __name__ == "__main__":
    main()
