"""Spectral radius and empirical behaviour of the bilinear recursion over a lambda*sigma^2 grid.

    python scripts/run_tightness.py --points 41 --out results/tightness.csv
"""

import argparse
import os

import numpy as np

from pdsplit.tightness import random_operator, sweep, sweep_csv


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--lo", type=float, default=0.5)
    p.add_argument("--hi", type=float, default=1.6)
    p.add_argument("--points", type=int, default=23)
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--out", default="results/tightness.csv")
    args = p.parse_args()

    grid = np.linspace(args.lo, args.hi, args.points)
    lines = []
    for seed in args.seeds:
        A = random_operator(args.size, args.size, seed)
        body = sweep_csv(sweep(grid, A=A, r=args.r, seed=seed)).splitlines()
        if not lines:
            lines.append("seed," + body[0])
        lines.extend(f"{seed},{row}" for row in body[1:])
    text = "\n".join(lines) + "\n"
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write(text)
    print(text, end="")


if __name__ == "__main__":
    main()
