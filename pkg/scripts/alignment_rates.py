"""Fitted alignment rates against the spectral predictions.

Prints one row per (field, mode): the fitted secant rate (continuous decay
exponent or discrete per-step factor) next to gap, lambda_1, kappa_dir and
1 - gamma lambda_1. The fig1 rows show the nonlinear regime where the
observed exponent is neither the gap nor lambda_1.

    python scripts/alignment_rates.py [--gamma 0.25]
"""

import argparse

import numpy as np

from talweg.analysis import alignment_series
from talweg.field import builtin
from talweg.flow import gd_iterates, integrate_flow, rate_constants
from talweg.spectra import decompose

CASES = [
    ("quadratic (1,3)", "quadratic", {"lambdas": [1.0, 3.0]}, [1.0, 1.0]),
    ("sharpness (1,3,1)", "sharpness", {"l1": 1.0, "l2": 3.0, "a": 1.0}, [0.03, 0.02]),
    ("sharpness (1,1.5,1)", "sharpness", {"l1": 1.0, "l2": 1.5, "a": 1.0}, [0.03, 0.02]),
    ("fig1", "fig1", {}, [0.1, 0.08]),
]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--horizon", type=float, default=30.0)
    args = p.parse_args()

    print(f"{'field':<22}{'mode':<12}{'fitted':>10}{'r2':>10}   predictions")
    for label, name, params, x0 in CASES:
        fld = builtin(name, params)
        frame = decompose(fld.hess(np.zeros(2)))
        lam = frame.eigenvalues
        v1 = frame.vector(1)
        T = args.horizon
        tr = integrate_flow(fld, np.array(x0), T, sample_times=np.linspace(0, T, int(20 * T) + 1),
                            abs_tol=0.0)
        fit = alignment_series(tr, np.zeros(2), v1).fit
        print(f"{label:<22}{'continuous':<12}{fit.rate:>10.5f}{fit.r2:>10.6f}   "
              f"gap={lam[1] - lam[0]:.5f}  lambda1={lam[0]:.5f}")
        g = args.gamma
        if g * lam[1] >= 2:
            continue
        tr = gd_iterates(fld, np.array(x0), g, 400)
        fit = alignment_series(tr, np.zeros(2), v1).fit
        kd = rate_constants(lam, g).kappa_dir.get(2)
        kd_s = "n/a" if kd is None else f"{kd:.5f}"
        print(f"{'':<22}{'discrete':<12}{fit.rate:>10.5f}{fit.r2:>10.6f}   "
              f"kappa_dir={kd_s}  1-gamma*lambda1={1 - g * lam[0]:.5f}")


if __name__ == "__main__":
    main()
