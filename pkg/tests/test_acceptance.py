"""End-to-end acceptance checks; each test records one PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from pdsplit import operators as ops
from pdsplit.functions import (
    box_indicator,
    conjugate_prox,
    l1_prox,
    quadratic_loss_oracle,
    squared_distance,
    zero_prox,
)
from pdsplit.problems import (
    InstanceRecipe,
    gen_fused_lasso,
    gen_lasso,
    lasso_solution_identity,
    reference_solve,
)
from pdsplit.solvers import (
    SolverState,
    StoppingRule,
    initial_state,
    map_states,
    solve,
    step,
    to_base,
)
from pdsplit.stepsizes import (
    StepsizeConfig,
    auto_theta,
    check_classic,
    check_relaxed,
    gamma,
    max_lambda,
)
from pdsplit.tightness import eigen_magnitudes, iteration_matrix, random_operator, sweep

from _helpers import random_problem, random_valid_stepsizes, rel_err


def _gap(F, F_ref):
    return (np.asarray(F) - F_ref) / abs(F_ref)


def _iters_to_gap(trace, F_ref, thr):
    hit = np.nonzero(_gap(trace.column("objective"), F_ref) <= thr)[0]
    return None if hit.size == 0 else int(trace.column("iter")[hit[0]])


# -- 1 ------------------------------------------------------------------------


def _run(alg, init, prob, cfg, iters):
    seq = [init]
    for _ in range(iters):
        seq.append(step(seq[-1], prob, cfg))
    return seq


def _random_init(rng, prob, cfg):
    x0, s0 = rng.standard_normal(prob.n), rng.standard_normal(prob.m)
    return initial_state("base", prob, cfg, x0=x0, s0=s0)


def _equivalence_errors(seed, iters=200):
    rng = np.random.default_rng(seed)
    worst = {}

    def note(key, err):
        worst[key] = max(worst.get(key, 0.0), err)

    # general f, g, h: base, afba and pd3o
    prob = random_problem(rng, smooth=True)
    cfg = random_valid_stepsizes(rng, prob)
    base = _run("base", _random_init(rng, prob, cfg), prob, cfg, iters)
    A = prob.A
    afba = _run("afba", map_states("base", "afba", base[0], cfg, A), prob, cfg, iters)
    pd3o = _run("pd3o", map_states("base", "pd3o", base[0], cfg, A), prob, cfg, iters)
    for k in range(iters + 1):
        note("base-afba", rel_err(map_states("afba", "base", afba[k], cfg, A).vector(), base[k].vector()))
        note("afba-pd3o", rel_err(map_states("afba", "pd3o", afba[k], cfg, A).vector(), pd3o[k].vector()))
        if k > 0:
            back = map_states("pd3o", "base", pd3o[k], cfg, A, prev=pd3o[k - 1])
            note("base-pd3o", rel_err(back.vector(), base[k].vector()))

    # f = 0: base and Chambolle-Pock
    prob = random_problem(rng, smooth=False)
    cfg = random_valid_stepsizes(rng, prob)
    base = _run("base", _random_init(rng, prob, cfg), prob, cfg, iters)
    cp = _run("cp", map_states("base", "cp", base[0], cfg, prob.A), prob, cfg, iters)
    for k in range(1, iters + 1):
        back = map_states("cp", "base", cp[k], cfg, prob.A, prev=cp[k - 1])
        note("base-cp", rel_err(back.vector(), base[k].vector()))

    # g = 0: base started at zeta0 = x0 - r grad f(x0) against PAPC
    prob = random_problem(rng, smooth=True, g_kind="zero")
    cfg = random_valid_stepsizes(rng, prob)
    x0, s0 = rng.standard_normal(prob.n), rng.standard_normal(prob.m)
    papc = _run("papc", SolverState(s0, x0, None, "papc"), prob, cfg, iters)
    base = _run("base", to_base(papc[0], prob, cfg), prob, cfg, iters)
    for k in range(iters + 1):
        note("base-papc", rel_err(to_base(papc[k], prob, cfg).vector(), base[k].vector()))
    return worst


def test_1_equivalence_suite(acceptance):
    t0 = time.perf_counter()
    worst = {}
    for seed in range(20):
        for key, err in _equivalence_errors(seed).items():
            worst[key] = max(worst.get(key, 0.0), err)
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-10 and elapsed < 10.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in sorted(worst.items())) + f"; {elapsed:.1f}s"
    acceptance(1, ok, detail)
    assert max(worst.values()) <= 1e-10, worst
    assert elapsed < 10.0


# -- 2 ------------------------------------------------------------------------


def test_2_tightness_oracle(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    worst = 0.0
    for lt in np.linspace(0.0, 2.0, 200):
        r, lam = 10 ** rng.uniform(-2, 2), 10 ** rng.uniform(-1, 1)
        brute = np.sort(np.abs(np.linalg.eigvals(iteration_matrix(lam, lt / lam, r))))
        worst = max(worst, float(np.abs(np.sort(eigen_magnitudes(lt).eigen_magnitudes) - brute).max()))
    grid = [0.9, 1.2, 1.3, 1.4, 1.6]
    labels = [label for _, _, label in sweep(grid, A=random_operator(8, 8, seed=0))]
    elapsed = time.perf_counter() - t0
    expected = ["converged"] * 3 + ["diverged"] * 2
    ok = worst <= 1e-12 and labels == expected and elapsed < 5.0
    acceptance(2, ok, f"max eigen error {worst:.1e}; labels {labels}; {elapsed:.1f}s")
    assert worst <= 1e-12
    assert labels == expected
    assert elapsed < 5.0


# -- 3 ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_lasso():
    prob = gen_lasso(InstanceRecipe())
    _, F_ref = reference_solve(prob, budget=50000)
    return prob, F_ref


def test_3_relaxed_condition_convergence(acceptance, desk_lasso):
    prob, F_ref = desk_lasso
    sigma = prob.A.sigma
    lam = 1.32 / sigma ** 2
    theta = auto_theta(lam, sigma)
    classic = check_classic("chambolle_pock", StepsizeConfig(1.0, lam), 0.0, sigma)
    relaxed = check_relaxed(StepsizeConfig(1.0, lam, theta), 0.0, sigma)
    t0 = time.perf_counter()
    hits = {}
    for r in (0.005, 0.01):
        cfg = StepsizeConfig(r, lam, theta)
        _, trace = solve(prob, "cp", cfg, stop=StoppingRule(max_iter=50000, tol=1e-14), timing=False)
        hits[r] = _iters_to_gap(trace, F_ref, 1e-6)
    elapsed = time.perf_counter() - t0
    ok = (not classic.satisfied and relaxed.satisfied and 0.75 < theta < 0.76
          and all(k is not None for k in hits.values()) and elapsed < 60.0)
    detail = (f"theta={theta:.4f}; classic CP rejects: {not classic.satisfied}; relaxed accepts: "
              f"{relaxed.satisfied}; iters to 1e-6 {hits}; {elapsed:.1f}s")
    acceptance(3, ok, detail)
    assert not classic.satisfied and relaxed.satisfied
    assert all(k is not None for k in hits.values()), hits
    assert elapsed < 60.0


# -- 4 ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def desk_fused():
    prob = gen_fused_lasso(InstanceRecipe())
    _, F_ref = reference_solve(prob, budget=50000)
    return prob, F_ref


def test_4_sufficiency_sweep(acceptance, desk_fused):
    prob, F_ref = desk_fused
    L, sigma = prob.f.lipschitz_L, prob.A.sigma
    t0 = time.perf_counter()
    results = {}
    ok = True
    for theta in (0.76, 0.8, 0.9, 1.0):
        cfg = StepsizeConfig(0.95 * gamma(theta) * 2 / L, max_lambda(theta, sigma), theta)
        fixed, _ = solve(prob, "base", cfg, stop=StoppingRule(max_iter=100000, tol=1e-16), timing=False)
        _, trace = solve(prob, "base", cfg, stop=StoppingRule(max_iter=20000, tol=1e-12),
                         fixed=fixed, timing=False)
        k = _iters_to_gap(trace, F_ref, 1e-6)
        phi = trace.column("phi")
        rise = float(np.max(np.diff(phi)) / phi[0])
        results[theta] = (k, rise)
        ok &= k is not None and rise <= 1e-10
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 120.0
    detail = ", ".join(f"theta={t}: {k} iters, max dPhi/Phi0 {d:.1e}" for t, (k, d) in results.items())
    acceptance(4, ok, f"{detail}; {elapsed:.1f}s")
    for theta, (k, rise) in results.items():
        assert k is not None, theta
        assert rise <= 1e-10, (theta, rise)
    assert elapsed < 120.0


# -- 5 ------------------------------------------------------------------------


def _table_row(alg, r, lam, L, sigma):
    if alg == "condat_vu":
        return lam * sigma ** 2 + r * L / 2 <= 1
    if alg in ("pdfp", "pd3o", "papc"):
        return r * L / 2 < 1 and lam * sigma ** 2 <= 1
    if alg == "afba":
        return lam * sigma ** 2 + math.sqrt(lam) * sigma + r * L <= 2
    return lam * sigma ** 2 <= 1


def test_5_condition_tables(acceptance):
    rng = np.random.default_rng(5)
    algs = ("condat_vu", "pdfp", "afba", "pd3o", "chambolle_pock", "papc")
    disagreements = relaxed_mismatch = 0
    for _ in range(1000):
        r, lam = rng.uniform(0.01, 2.5), rng.uniform(0.01, 2.0)
        L, sigma = rng.uniform(0.0, 3.0), rng.uniform(0.1, 2.0)
        cfg = StepsizeConfig(r, lam, 1.0)
        for alg in algs:
            disagreements += check_classic(alg, cfg, L, sigma).satisfied != _table_row(alg, r, lam, L, sigma)
        relaxed = check_relaxed(cfg, L, sigma).satisfied
        relaxed_mismatch += relaxed != _table_row("pd3o", r, lam, L, sigma)
    ok = disagreements == 0 and relaxed_mismatch == 0
    acceptance(5, ok, f"{disagreements} row disagreements, {relaxed_mismatch} relaxed/pd3o mismatches over 1000 points")
    assert disagreements == 0
    assert relaxed_mismatch == 0


# -- 6 ------------------------------------------------------------------------


def test_6_closed_form_optima(acceptance):
    rec = InstanceRecipe(n=200, m_data=200, nnz=20, mu=0.3, design="identity", seed=4)
    prob = gen_lasso(rec)
    x_star = lasso_solution_identity(prob.b, rec.mu)
    sigma = prob.A.sigma
    configs = {
        "default": StepsizeConfig(1.0 / sigma, max_lambda(1.0, sigma), 1.0),
        "lam*1.32": StepsizeConfig(1.0 / sigma, 1.32 / sigma ** 2, auto_theta(1.32 / sigma ** 2, sigma)),
    }
    errors = {}
    for label, cfg in configs.items():
        for alg in ("base", "afba", "pd3o", "cp"):
            st, _ = solve(prob, alg, cfg, stop=StoppingRule(max_iter=20000, tol=1e-14), timing=False)
            errors[f"{alg}/{label}"] = float(np.abs(st.x - x_star).max())
    worst = max(errors.values())
    ok = worst <= 1e-6 and np.count_nonzero(x_star) > 0
    acceptance(6, ok, f"max inf-norm error {worst:.1e} over {len(errors)} runs ({np.count_nonzero(x_star)} nonzeros)")
    assert worst <= 1e-6, errors


# -- 7 ------------------------------------------------------------------------


def test_7_directional_speedup(acceptance):
    wins, rows = 0, []
    for seed in range(5):
        rec = InstanceRecipe(n=250, m_data=250, nnz=25, mu1=0.25, mu2=0.05, design="identity", seed=seed)
        prob = gen_fused_lasso(rec)
        _, F_ref = reference_solve(prob, budget=20000)
        L, sigma = prob.f.lipschitz_L, prob.A.sigma
        theta = 1 / 1.19
        default = StepsizeConfig(1.0 / L, max_lambda(1.0, sigma), 1.0)
        enlarged = StepsizeConfig(1.0 / L, max_lambda(theta, sigma), theta)
        its = []
        for cfg in (default, enlarged):
            _, trace = solve(prob, "pd3o", cfg, stop=StoppingRule(max_iter=5000, tol=1e-14), timing=False)
            its.append(_iters_to_gap(trace, F_ref, 1e-4))
        rows.append(its)
        wins += None not in its and its[1] < its[0]
    ok = wins >= 4
    acceptance(7, ok, f"{wins}/5 seeds faster with 1.19*lambda; iters (default, enlarged) {rows}")
    assert wins >= 4, rows


# -- 8 ------------------------------------------------------------------------


def _random_prox(rng, m):
    kind = rng.integers(4)
    if kind == 0:
        return l1_prox(rng.uniform(0.1, 3))
    if kind == 1:
        return box_indicator(rng.uniform(0.1, 3))
    if kind == 2:
        return squared_distance(rng.standard_normal(m))
    return zero_prox()


def test_8_prox_oracle_properties(acceptance):
    rng = np.random.default_rng(8)
    fails = {"moreau": 0, "firm": 0, "gradient": 0, "adjoint": 0}
    for _ in range(100):
        m = int(rng.integers(1, 10))
        h, tau = _random_prox(rng, m), 10 ** rng.uniform(-1, 1)
        v = 3 * rng.standard_normal(m)
        total = conjugate_prox(h, tau, v) + tau * h.prox(1 / tau, v / tau)
        fails["moreau"] += not np.allclose(total, v, atol=1e-10)

        u, w = 3 * rng.standard_normal(m), 3 * rng.standard_normal(m)
        for T in (lambda z: h.prox(tau, z), lambda z: conjugate_prox(h, tau, z)):
            d = T(u) - T(w)
            fails["firm"] += not d @ d <= d @ (u - w) + 1e-10

        n, k = int(rng.integers(1, 10)), int(rng.integers(1, 10))
        f = quadratic_loss_oracle(ops.dense(rng.standard_normal((k, n))), rng.standard_normal(k))
        x, eps = rng.standard_normal(n), 1e-6
        fd = np.array([(f.value(x + eps * e) - f.value(x - eps * e)) / (2 * eps) for e in np.eye(n)])
        g = f.gradient(x)
        fails["gradient"] += not np.linalg.norm(fd - g) <= 1e-5 * max(1.0, np.linalg.norm(g))

        A = [ops.dense(rng.standard_normal((k, n + 1))), ops.difference_matrix(n + 1),
             ops.identity(n + 1), ops.diagonal(rng.standard_normal(n + 1))][rng.integers(4)]
        p, q = rng.standard_normal(A.cols), rng.standard_normal(A.rows)
        lhs, rhs = A.apply(p) @ q, p @ A.apply_adjoint(q)
        fails["adjoint"] += not abs(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(p) * np.linalg.norm(q))
    ok = not any(fails.values())
    acceptance(8, ok, "failures per property over 100 cases: " + ", ".join(f"{k} {v}" for k, v in fails.items()))
    assert ok, fails
