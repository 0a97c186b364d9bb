"""Valley volume ratio over time for fig1 (or a quadratic), continuous and discrete.

    python scripts/concentration_curve.py --width 0.1 --n 2000 --out out/concentration.csv
"""

import argparse

import numpy as np

from talweg.analysis import ball_sampler, volume_concentration
from talweg.field import builtin
from talweg.io import write_csv


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--field", default="fig1", choices=["fig1", "quadratic"])
    p.add_argument("--width", type=float, default=0.1)
    p.add_argument("--set-radius", type=float, default=0.2)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--gamma", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="optional CSV path")
    args = p.parse_args()

    params = {"lambdas": [1.0, 3.0]} if args.field == "quadratic" else {}
    fld = builtin(args.field, params)
    S = ball_sampler(np.zeros(2), args.set_radius)
    rows = []
    for mode, times in (("continuous", np.linspace(0, 4, 17)), ("discrete", np.arange(0, 61, 5))):
        rep = volume_concentration(fld, np.zeros(2), S, args.width, times, n=args.n, mode=mode,
                                   gamma=args.gamma if mode == "discrete" else None, seed=args.seed)
        print(f"{mode}:")
        for t, r, se in zip(rep.times, rep.ratios, rep.std_errors):
            print(f"  {t:6.2f}  {r:.4f} +/- {se:.4f}")
            rows.append([mode, t, r, se])
    if args.out:
        write_csv(args.out, ["mode", "time", "ratio", "std_error"], rows, "script", args.seed)


if __name__ == "__main__":
    main()
