"""Mass of eps-tubes around the Cantor slits in the disc, by Monte Carlo.

Usage: python scripts/cantor_tube.py [--samples 200000] [--seed 0] [--eps 4e-3 2e-3 1e-3]
"""

import argparse
import sys

from dirtrace import gallery


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, nargs="+", default=[4e-3, 2e-3, 1e-3])
    args = p.parse_args(argv)

    for eps in args.eps:
        m, se = gallery.cantor_tube_mass(eps, n_samples=args.samples, seed=args.seed)
        print(f"eps={eps:g}  depth={gallery.cantor_depth_for(eps)}  tube mass {m:.5f} +- {se:.1e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
