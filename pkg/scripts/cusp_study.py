"""Cusp: trace L2 norm in the directional measure vs arclength cutoffs.

Usage: python scripts/cusp_study.py [--halvings 6] [--csv out.csv]
"""

import argparse
import csv
import sys

import numpy as np

from dirtrace.fields import from_expression
from dirtrace.geometry import Cusp
from dirtrace.measure import arclength_study, mu_exact
from dirtrace.trace import trace_field


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--halvings", type=int, default=6)
    p.add_argument("--csv", help="write the cutoff table here")
    args = p.parse_args(argv)

    mu = mu_exact(Cusp(), (1, 0))
    cutoffs = [0.5 ** (k + 1) for k in range(args.halvings + 1)]
    rows = []
    for alpha in (0.6, 0.75, 0.9):
        tb = trace_field(from_expression(f"x2^(-{alpha!r})"), mu)
        l2 = float(np.dot(mu.weights, tb.values[0] ** 2))
        study = arclength_study(alpha, cutoffs)
        print(f"alpha={alpha}: int trace^2 dmu = {l2:.12f} (closed form {1 / (2 - alpha):.12f})")
        for eps, val in study:
            print(f"  cutoff {eps:.6f}  arclength L2^2 {val:12.6f}")
            rows.append((alpha, eps, val))
        print(f"  last/first = {study[-1][1] / study[0][1]:.3f}, per-halving growth -> 2^(2a-1) = {2 ** (2 * alpha - 1):.4f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha", "cutoff", "arclength_l2sq"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
