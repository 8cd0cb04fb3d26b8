"""Serpent comb: riser energy converges while column means grow like k^(1/4).

Usage: python scripts/serpent_study.py [--k-max 64]
"""

import argparse
import sys

from dirtrace import gallery


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--k-max", type=int, default=64)
    args = p.parse_args(argv)

    entry = gallery.serpent(args.k_max)
    print(f"riser series up to k_max: {gallery.riser_series(1, args.k_max):.10f}")
    print(f"tail bound beyond k_max:   {gallery.riser_tail(args.k_max):.3e}")
    k = 2
    while k <= args.k_max:
        x = 0.5 * (1 / (4 * k + 4) + 1 / (4 * k + 3))
        m = gallery.column_mean(entry, x)
        print(f"k={k:4d}  column mean {m:.6f}  lower bound (k-1)^(1/4) {(k - 1) ** 0.25:.6f}")
        k *= 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
