"""Fused LASSO experiments.

``theta`` sweep: base algorithm with ``r = 0.95 * Gamma(theta) * 2 / L`` and
the largest admissible ``lambda``, with the Lyapunov column recorded.
``speedup``: identity design, PD3O at the default ``lambda`` against
``1.19 lambda`` over several seeds.

    python scripts/run_fused_lasso.py theta --out results/theta
    python scripts/run_fused_lasso.py speedup --seeds 0 1 2 3 4
"""

import argparse
import os

import numpy as np

from pdsplit.problems import InstanceRecipe, gen_fused_lasso, reference_solve
from pdsplit.solvers import StoppingRule, solve
from pdsplit.stepsizes import StepsizeConfig, gamma, max_lambda


def iters_to_gap(trace, F_ref, thr):
    gap = (trace.column("objective") - F_ref) / abs(F_ref)
    hit = np.nonzero(gap <= thr)[0]
    return "" if hit.size == 0 else int(trace.column("iter")[hit[0]])


def theta_sweep(args):
    prob = gen_fused_lasso(InstanceRecipe(seed=args.seed))
    _, F_ref = reference_solve(prob, budget=50000)
    L, sigma = prob.f.lipschitz_L, prob.A.sigma
    rows = ["theta,r,lambda,iters_to_1e-6,final_gap"]
    for theta in args.thetas:
        cfg = StepsizeConfig(0.95 * gamma(theta) * 2 / L, max_lambda(theta, sigma), theta)
        fixed, _ = solve(prob, "base", cfg, stop=StoppingRule(max_iter=100000, tol=1e-16))
        _, trace = solve(prob, "base", cfg, stop=StoppingRule(max_iter=args.max_iter, tol=1e-12),
                         fixed=fixed)
        with open(os.path.join(args.out, f"trace_theta{theta:g}.csv"), "w") as fh:
            trace.to_csv(fh)
        final = (trace.records[-1].objective - F_ref) / abs(F_ref)
        rows.append(f"{theta:g},{cfg.r!r},{cfg.lam!r},{iters_to_gap(trace, F_ref, 1e-6)},{final:.6e}")
    return rows


def speedup(args):
    rows = ["seed,iters_default,iters_enlarged"]
    theta = 1 / args.factor
    for seed in args.seeds:
        rec = InstanceRecipe(n=250, m_data=250, nnz=25, mu1=0.25, mu2=0.05, design="identity", seed=seed)
        prob = gen_fused_lasso(rec)
        _, F_ref = reference_solve(prob)
        L, sigma = prob.f.lipschitz_L, prob.A.sigma
        its = []
        for cfg in (StepsizeConfig(1 / L, max_lambda(1.0, sigma)),
                    StepsizeConfig(1 / L, max_lambda(theta, sigma), theta)):
            _, trace = solve(prob, "pd3o", cfg, stop=StoppingRule(max_iter=args.max_iter, tol=1e-14))
            its.append(iters_to_gap(trace, F_ref, 1e-4))
        rows.append(f"{seed},{its[0]},{its[1]}")
    return rows


def main():
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="what", required=True)
    t = sub.add_parser("theta")
    t.add_argument("--thetas", type=float, nargs="+", default=[0.76, 0.8, 0.9, 1.0])
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-iter", type=int, default=20000)
    s = sub.add_parser("speedup")
    s.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    s.add_argument("--factor", type=float, default=1.19)
    s.add_argument("--max-iter", type=int, default=5000)
    for q in (t, s):
        q.add_argument("--out", default="results/fused")
    args = p.parse_args()
    os.makedirs(args.out, exist_ok=True)
    rows = theta_sweep(args) if args.what == "theta" else speedup(args)
    text = "\n".join(rows) + "\n"
    with open(os.path.join(args.out, f"{args.what}.csv"), "w") as fh:
        fh.write(text)
    print(text, end="")


if __name__ == "__main__":
    main()
