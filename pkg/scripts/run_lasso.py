"""Chambolle-Pock on a LASSO instance: default dual stepsize vs 1.32x.

Writes one trace CSV per configuration plus a comparison table.

    python scripts/run_lasso.py --out results/lasso
"""

import argparse
import os

from pdsplit.cli import ExperimentConfig, compare_runs


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--out", default="results/lasso")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--m-data", type=int, default=50)
    p.add_argument("--mu", type=float, default=20.0)
    p.add_argument("--r", type=float, nargs="+", default=[0.005, 0.01])
    p.add_argument("--max-iter", type=int, default=50000)
    args = p.parse_args()

    common = dict(problem="lasso", algo="cp", n=args.n, m_data=args.m_data, mu=args.mu,
                  seed=args.seed, max_iter=args.max_iter, tol=1e-13, timing=True)
    configs = []
    for r in args.r:
        configs.append(ExperimentConfig(r=r, lambda_scale=1.0, label=f"r{r:g}_lam", **common))
        # theta below 1 is what admits lambda sigma^2 = 1.32
        configs.append(ExperimentConfig(r=r, lambda_scale=1.32, auto_theta=True,
                                        label=f"r{r:g}_1.32lam", **common))
    table, results = compare_runs([c.validate() for c in configs])
    os.makedirs(args.out, exist_ok=True)
    for res in results:
        name = res.config.label
        with open(os.path.join(args.out, f"trace_{name}.csv"), "w") as fh:
            res.trace.to_csv(fh)
    with open(os.path.join(args.out, "compare.csv"), "w") as fh:
        fh.write(table)
    print(table, end="")


if __name__ == "__main__":
    main()
