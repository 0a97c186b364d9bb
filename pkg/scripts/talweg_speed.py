"""Talweg branch speed |theta'(r)| |grad f(theta(r))| as the level shrinks to f(x*).

    python scripts/talweg_speed.py --field fig1 --count 12
"""

import argparse

import numpy as np

from talweg.field import builtin
from talweg.geometry import talweg_branch_scan


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--field", default="fig1")
    p.add_argument("--seed", type=int, default=0, help="seed for random_poly")
    p.add_argument("--lo", type=float, default=1e-7)
    p.add_argument("--hi", type=float, default=1e-2)
    p.add_argument("--count", type=int, default=11)
    args = p.parse_args()

    params = {"seed": args.seed} if args.field == "random_poly" else {}
    fld = builtin(args.field, params)
    levels = np.geomspace(args.lo, args.hi, args.count)
    scan = talweg_branch_scan(fld, np.zeros(fld.dim), levels)
    print(f"{'level':>12}" + "".join(f"{b + ' product':>20}" for b in scan))
    for k, r in enumerate(levels):
        print(f"{r:12.3e}" + "".join(f"{s.product[k]:20.12f}" for s in scan.values()))


if __name__ == "__main__":
    main()
