"""Command-line experiment runner.

Subcommands
-----------
solve            run one configuration, write ``trace.csv`` and ``summary.txt``
compare          run several labeled configurations on one instance
check-stepsizes  report the relaxed and classic stepsize verdicts
tightness        sweep ``lam sigma^2`` on the bilinear problem
gen-problem      write a synthetic instance to a directory

Configuration comes from a flat ``key=value`` file (``--config``) with
command-line flags taking precedence. Keys are the long flag names with
dashes replaced by underscores.

Exit codes: 0 finished, 2 diverged, 3 invalid configuration, 4 stepsize
check refused, 5 hit ``max_iter`` without reaching a ``1e-6`` gap.
"""

import argparse
import csv
import dataclasses
import fractions
import io
import math
import os
import sys
import tempfile
import time
import typing
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .functions import ParameterError
from .problems import (
    InstanceRecipe,
    gen_fused_lasso,
    gen_lasso,
    load_instance,
    reference_solve,
    save_instance,
)
from .solvers import (
    ALGORITHMS,
    DivergenceError,
    SolverState,
    StoppingRule,
    UsageError,
    solve,
)
from .stepsizes import (
    CLASSIC_ALGORITHMS,
    StepsizeConfig,
    auto_theta,
    check_classic,
    check_relaxed,
    r_ceiling,
)
from . import tightness

EXIT_OK = 0
EXIT_DIVERGED = 2
EXIT_CONFIG = 3
EXIT_STEPSIZE = 4
EXIT_STAGNATED = 5

GAP_THRESHOLDS = (1e-2, 1e-4, 1e-6)
PROBLEMS = ("lasso", "fused_lasso")


class ConfigError(ValueError):
    """Unparseable, unknown or conflicting configuration."""


@dataclass
class ExperimentConfig:
    """One solver run: instance recipe, algorithm, stepsizes and outputs.

    ``r``/``lam`` are absolute stepsizes; ``r_scale``/``lambda_scale``
    multiply the defaults ``1/L`` (``1/sigma`` when ``f = 0``) and
    ``1/sigma^2``. Giving both forms of the same stepsize is an error, as is
    combining ``theta`` with ``auto_theta``.
    """

    problem: str = "fused_lasso"
    design: str = "gaussian"
    n: int = 500
    m_data: int = 50
    nnz: int = 5
    noise: float = 0.1
    mu: float = 20.0
    mu1: float = 20.0
    mu2: float = 2.0
    seed: int = 0
    instance: Optional[str] = None
    algo: str = "base"
    r: Optional[float] = None
    r_scale: Optional[float] = None
    lam: Optional[float] = None
    lambda_scale: Optional[float] = None
    theta: Optional[float] = None
    auto_theta: bool = False
    max_iter: int = 5000
    tol: float = 1e-10
    record_every: int = 1
    ref_budget: int = 20000
    out: Optional[str] = None
    phi: bool = False
    override_check: bool = False
    timing: bool = False
    label: Optional[str] = None

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.algo.replace("-", "_") not in ALGORITHMS + ("chambolle_pock",):
            raise ConfigError(f"algo must be one of {ALGORITHMS}, got {self.algo!r}")
        if self.r is not None and self.r_scale is not None:
            raise ConfigError("give r or r_scale, not both")
        if self.lam is not None and self.lambda_scale is not None:
            raise ConfigError("give lambda or lambda_scale, not both")
        if self.theta is not None and self.auto_theta:
            raise ConfigError("theta and auto_theta are mutually exclusive")
        for name in ("r", "r_scale", "lam", "lambda_scale"):
            v = getattr(self, name)
            if v is not None and not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite")
        if self.max_iter < 0 or self.record_every < 1 or self.ref_budget < 1:
            raise ConfigError("need max_iter >= 0, record_every >= 1, ref_budget >= 1")
        if not self.tol >= 0:
            raise ConfigError("tol must be nonnegative")
        try:
            self.recipe()
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def recipe(self):
        return InstanceRecipe(
            n=self.n, m_data=self.m_data, nnz=self.nnz, noise=self.noise,
            mu=self.mu, mu1=self.mu1, mu2=self.mu2, seed=self.seed, design=self.design,
        )


def _base_type(tp):
    args = [a for a in typing.get_args(tp) if a is not type(None)]
    return (args[0] if args else tp), bool(args)


_FIELD_TYPES = {f.name: _base_type(f.type) for f in fields(ExperimentConfig)}
# the flag is spelled --lambda; the attribute avoids the keyword
_KEY_ALIASES = {"lambda": "lam"}


def _coerce(key, text):
    typ, optional = _FIELD_TYPES[key]
    text = text.strip()
    if typ is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    if text.lower() in ("", "none"):
        if optional:
            return None
        raise ConfigError(f"{key} may not be empty")
    try:
        if typ is int:
            return int(text)
        if typ is float:
            return _float(text)
    except (ValueError, argparse.ArgumentTypeError) as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc
    return text


def parse_key_values(lines, source="<config>"):
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        key = _KEY_ALIASES.get(key, key)
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config_file(path):
    try:
        with open(path) as fh:
            return parse_key_values(fh, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def build_config(file_values=None, overrides=None):
    values = dict(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return ExperimentConfig(**values).validate()


# -- running ------------------------------------------------------------------


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def make_problem(cfg):
    if cfg.instance:
        try:
            return load_instance(cfg.instance)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot load instance {cfg.instance}: {exc}") from exc
    gen = gen_lasso if cfg.problem == "lasso" else gen_fused_lasso
    return gen(cfg.recipe())


def resolve_stepsizes(cfg, prob):
    """Turn the stepsize fields of `cfg` into a :class:`StepsizeConfig`."""
    L, sigma = prob.f.lipschitz_L, prob.A.sigma
    if sigma <= 0:
        raise ConfigError("coupling operator has zero norm")
    r = cfg.r
    if r is None:
        base = 1.0 / L if L > 0 else 1.0 / sigma
        r = base * (cfg.r_scale or 1.0)
    lam = cfg.lam
    if lam is None:
        lam = (cfg.lambda_scale or 1.0) / sigma ** 2
    if cfg.auto_theta:
        try:
            theta = auto_theta(lam, sigma)
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        theta = 1.0 if cfg.theta is None else cfg.theta
    try:
        return StepsizeConfig(r, lam, theta)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc


def verdict_lines(step, L, sigma):
    lines = []
    v = check_relaxed(step, L, sigma)
    lines.append(_verdict_line(f"relaxed (theta={step.theta:.6g})", v))
    for name in CLASSIC_ALGORITHMS:
        lines.append(_verdict_line(name, check_classic(name, step, L, sigma)))
    return lines


def _verdict_line(name, v):
    state = "ok" if v.satisfied else "FAIL"
    return f"  {name:<24s} {state:<4s} margin={v.margin:+.6g}  binding: {v.binding}"


def gaps(objectives, F_ref):
    return (np.asarray(objectives, dtype=float) - F_ref) / max(abs(F_ref), 1e-300)


def iters_to_gap(trace, F_ref, threshold):
    g = gaps(trace.column("objective"), F_ref)
    hit = np.nonzero(g <= threshold)[0]
    if hit.size == 0:
        return None
    return int(trace.records[hit[0]].iter)


@dataclass
class RunResult:
    config: ExperimentConfig
    step: StepsizeConfig
    exit_code: int
    status: str
    trace: object
    F_ref: float
    wall_ms: float
    summary: str

    @property
    def final_gap(self):
        return float(gaps([self.trace.records[-1].objective], self.F_ref)[0])


def _fixed_point(prob, step, budget):
    """Base fixed point for the Lyapunov column, from a classic-safe base run."""
    L, sigma = prob.f.lipschitz_L, prob.A.sigma
    safe = StepsizeConfig(1.0 / L if L > 0 else 1.0 / sigma, 1.0 / sigma ** 2, 1.0)
    st, _ = solve(prob, "base", safe, stop=StoppingRule(max_iter=budget, tol=1e-15))
    zeta = st.x + step.r * prob.A.apply_adjoint(st.s)
    return SolverState(st.s, st.x, zeta, "base")


def run_experiment(cfg, prob=None, F_ref=None, write=True):
    """Run one configuration. Returns a :class:`RunResult`.

    Raises :class:`ConfigError` for invalid settings. A refused stepsize
    check returns exit code 4 without touching the output directory.
    """
    if prob is None:
        prob = make_problem(cfg)
    step = resolve_stepsizes(cfg, prob)
    L, sigma = prob.f.lipschitz_L, prob.A.sigma
    verdict = check_relaxed(step, L, sigma)
    header = _summary_header(cfg, prob, step)
    if not verdict.satisfied and not cfg.override_check:
        text = "\n".join(header + [
            f"status: refused (violates {verdict.binding}, margin {verdict.margin:.3g})",
            "stepsize verdicts:", *verdict_lines(step, L, sigma), "",
        ])
        return RunResult(cfg, step, EXIT_STEPSIZE, "refused", None, math.nan, 0.0, text)
    if F_ref is None:
        _, F_ref = reference_solve(prob, budget=cfg.ref_budget)
    fixed = _fixed_point(prob, step, cfg.ref_budget) if cfg.phi else None
    stop = StoppingRule(max_iter=cfg.max_iter, tol=cfg.tol, record_every=cfg.record_every)
    t0 = time.perf_counter()
    try:
        _, trace = solve(prob, cfg.algo.replace("-", "_"), step, stop=stop,
                         override=True, fixed=fixed, timing=cfg.timing)
        status = "converged" if trace.converged else "max_iter"
    except DivergenceError as exc:
        trace, status = exc.trace, "diverged"
    except UsageError as exc:
        raise ConfigError(str(exc)) from exc
    wall = (time.perf_counter() - t0) * 1e3

    final_gap = float(gaps([trace.records[-1].objective], F_ref)[0])
    if status == "diverged":
        code = EXIT_DIVERGED
    elif trace.converged or cfg.max_iter == 0 or final_gap <= GAP_THRESHOLDS[-1]:
        code = EXIT_OK
    else:
        code = EXIT_STAGNATED
    lines = header + [
        f"F_ref: {F_ref!r}",
        f"status: {status}",
        f"exit_code: {code}",
        f"iterations: {trace.iterations}",
        f"final_objective: {trace.records[-1].objective!r}",
        f"final_gap: {final_gap:.6e}",
    ]
    for thr in GAP_THRESHOLDS:
        k = iters_to_gap(trace, F_ref, thr)
        lines.append(f"iters_to_gap_{thr:.0e}: {'never' if k is None else k}")
    lines.append(f"wall_ms: {wall:.1f}")
    lines.append("stepsize verdicts:")
    lines.extend(verdict_lines(step, L, sigma))
    text = "\n".join(lines) + "\n"
    result = RunResult(cfg, step, code, status, trace, F_ref, wall, text)
    if write and cfg.out:
        atomic_write(os.path.join(cfg.out, "trace.csv"), trace.to_csv())
        atomic_write(os.path.join(cfg.out, "summary.txt"), text)
    return result


def _summary_header(cfg, prob, step):
    L, sigma = prob.f.lipschitz_L, prob.A.sigma
    source = cfg.instance or f"{cfg.design} design, seed={cfg.seed}"
    return [
        f"problem: {prob.name} (n={prob.n}, m={prob.m}; {source})",
        f"algorithm: {cfg.algo}",
        f"L: {L!r}",
        f"sigma: {sigma!r}",
        f"r: {step.r!r}",
        f"lambda: {step.lam!r}",
        f"theta: {step.theta!r}",
        f"lambda*sigma^2: {step.lam * sigma ** 2:.6g}",
        f"r*L/2: {step.r * L / 2:.6g}",
        f"r ceiling at theta: {r_ceiling(step.theta, L):.6g}",
    ]


def compare_runs(configs):
    """Run labeled configurations on one shared instance; returns CSV text.

    All configurations must describe the same instance (same seed and
    recipe, or the same instance directory).
    """
    if not configs:
        raise ConfigError("nothing to compare")
    seeds = {c.seed for c in configs}
    if len(seeds) > 1:
        raise ConfigError(f"configurations use different problem seeds: {sorted(seeds)}")
    keys = {(c.instance, c.problem, c.recipe()) for c in configs}
    if len(keys) > 1:
        raise ConfigError("configurations describe different problem instances")
    labels = [c.label or f"run{i}" for i, c in enumerate(configs)]
    if len(set(labels)) != len(labels):
        raise ConfigError("labels must be distinct")
    prob = make_problem(configs[0])
    _, F_ref = reference_solve(prob, budget=max(c.ref_budget for c in configs))
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["label", "iters_to_1e-4", "final_gap", "wall_ms"])
    results = []
    for label, c in zip(labels, configs):
        res = run_experiment(dataclasses.replace(c, out=None), prob=prob, F_ref=F_ref, write=False)
        results.append(res)
        if res.trace is None:
            w.writerow([label, "", "", ""])
            continue
        k = iters_to_gap(res.trace, F_ref, 1e-4)
        w.writerow([label, "" if k is None else k, f"{res.final_gap:.6e}", f"{res.wall_ms:.1f}"])
    return out.getvalue(), results


# -- argument parsing ---------------------------------------------------------


def _float(text):
    try:
        return float(fractions.Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


def _add_run_flags(p):
    p.add_argument("--config", help="key=value file; flags override it")
    g = p.add_argument_group("instance")
    g.add_argument("--problem", choices=PROBLEMS)
    g.add_argument("--design", choices=("gaussian", "identity"))
    g.add_argument("--n", type=int)
    g.add_argument("--m-data", type=int)
    g.add_argument("--nnz", type=int)
    g.add_argument("--noise", type=_float)
    g.add_argument("--mu", type=_float)
    g.add_argument("--mu1", type=_float)
    g.add_argument("--mu2", type=_float)
    g.add_argument("--seed", type=int)
    g.add_argument("--instance", help="directory written by gen-problem")
    g = p.add_argument_group("algorithm")
    g.add_argument("--algo")
    g.add_argument("--r", type=_float, help="primal stepsize")
    g.add_argument("--r-scale", type=_float, help="multiple of 1/L (1/sigma if f = 0)")
    g.add_argument("--lambda", dest="lam", type=_float, help="stepsize product")
    g.add_argument("--lambda-scale", type=_float, help="multiple of 1/sigma^2")
    g.add_argument("--theta", type=_float)
    g.add_argument("--auto-theta", action="store_const", const=True, default=None)
    g.add_argument("--max-iter", type=int)
    g.add_argument("--tol", type=_float)
    g.add_argument("--record-every", type=int)
    g.add_argument("--ref-budget", type=int)
    g.add_argument("--phi", action="store_const", const=True, default=None,
                   help="record the Lyapunov value (computes a fixed point first)")
    g.add_argument("--override-check", action="store_const", const=True, default=None)
    g.add_argument("--timing", action="store_const", const=True, default=None,
                   help="fill the wall_ms trace column (breaks byte-identical traces)")
    g.add_argument("--label")


_RUN_KEYS = [f.name for f in fields(ExperimentConfig) if f.name != "out"]


def _overrides(args):
    return {k: getattr(args, k, None) for k in _RUN_KEYS}


def _config_from_args(args):
    file_values = load_config_file(args.config) if args.config else {}
    ov = _overrides(args)
    ov["out"] = getattr(args, "out", None)
    return build_config(file_values, ov)


def _parse_variant(text):
    label, _, body = text.partition(":")
    if not label or not body:
        raise ConfigError(f"variant must look like label:key=value,key=value, got {text!r}")
    values = parse_key_values(body.split(","), source=f"variant {label}")
    values["label"] = label
    return values


def build_parser():
    parser = argparse.ArgumentParser(prog="pdsplit", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one configuration")
    _add_run_flags(p)
    p.add_argument("--out", help="directory for trace.csv and summary.txt")

    p = sub.add_parser("compare", help="compare labeled configurations on one instance")
    _add_run_flags(p)
    p.add_argument("configs", nargs="*", help="key=value files, one per run")
    p.add_argument("--variant", action="append", default=[],
                   help="label:key=value,... applied on top of the flags")
    p.add_argument("--out", help="CSV path (stdout if omitted)")

    p = sub.add_parser("check-stepsizes", help="relaxed and classic verdicts")
    p.add_argument("--r", type=_float, required=True)
    p.add_argument("--lambda", dest="lam", type=_float, required=True)
    p.add_argument("--theta", type=_float)
    p.add_argument("--auto-theta", action="store_true")
    p.add_argument("--L", dest="L", type=_float, required=True)
    p.add_argument("--sigma", type=_float, required=True)

    p = sub.add_parser("tightness", help="bilinear spectral sweep")
    p.add_argument("--grid", default="0.5,0.8,1.0,1.2,1.3,4/3,1.4,1.6",
                   help="comma-separated lam*sigma^2 values (fractions allowed)")
    p.add_argument("--size", type=int, default=8, help="A is size x size")
    p.add_argument("--cond", type=_float, default=2.0)
    p.add_argument("--r", type=_float, default=1.0)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV path (stdout if omitted)")

    p = sub.add_parser("gen-problem", help="write an instance directory")
    _add_run_flags(p)
    p.add_argument("--out", required=True)
    return parser


def _cmd_solve(args):
    cfg = _config_from_args(args)
    res = run_experiment(cfg)
    sys.stdout.write(res.summary)
    if res.exit_code == EXIT_STEPSIZE:
        print(f"refused: stepsizes violate the relaxed condition; pass --override-check to run anyway",
              file=sys.stderr)
    return res.exit_code


def _cmd_compare(args):
    base_file = load_config_file(args.config) if args.config else {}
    ov = _overrides(args)
    configs = [build_config({**base_file, **load_config_file(path)}, ov) for path in args.configs]
    for i, c in enumerate(configs):
        if c.label is None:
            configs[i] = dataclasses.replace(c, label=os.path.splitext(os.path.basename(args.configs[i]))[0])
    for text in args.variant:
        configs.append(build_config({**base_file, **{k: v for k, v in ov.items() if v is not None},
                                     **_parse_variant(text)}))
    if not configs:
        configs = [build_config(base_file, ov)]
    text, _ = compare_runs(configs)
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_check(args):
    if args.theta is not None and args.auto_theta:
        raise ConfigError("theta and auto-theta are mutually exclusive")
    try:
        theta = auto_theta(args.lam, args.sigma) if args.auto_theta else (1.0 if args.theta is None else args.theta)
        step = StepsizeConfig(args.r, args.lam, theta)
        lines = verdict_lines(step, args.L, args.sigma)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"r={step.r:g} lambda={step.lam:g} theta={step.theta:.6g} "
          f"lambda*sigma^2={step.lam * args.sigma ** 2:.6g} "
          f"r ceiling={r_ceiling(step.theta, args.L):.6g}")
    print("\n".join(lines))
    return EXIT_OK if check_relaxed(step, args.L, args.sigma) else EXIT_STEPSIZE


def _cmd_tightness(args):
    grid = [t for t in (s.strip() for s in args.grid.split(",")) if t]
    if not grid:
        raise ConfigError("empty grid")
    try:
        values = [_float(t) for t in grid]
        if args.size < 1 or args.iters < 100:
            raise ConfigError("need size >= 1 and iters >= 100")
        A = tightness.random_operator(args.size, args.size, args.seed, args.cond)
        rows = tightness.sweep(values, A=A, r=args.r, iters=args.iters, seed=args.seed)
    except (ParameterError, argparse.ArgumentTypeError) as exc:
        raise ConfigError(str(exc)) from exc
    text = tightness.sweep_csv(rows)
    if args.out:
        atomic_write(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def _cmd_gen(args):
    cfg = _config_from_args(args)
    if cfg.instance:
        raise ConfigError("gen-problem builds a new instance; drop --instance")
    prob = make_problem(cfg)
    save_instance(prob, cfg.out)
    print(f"wrote {prob.name} instance ({prob.K.rows}x{prob.K.cols}) to {cfg.out}")
    return EXIT_OK


_COMMANDS = {
    "solve": _cmd_solve,
    "compare": _cmd_compare,
    "check-stepsizes": _cmd_check,
    "tightness": _cmd_tightness,
    "gen-problem": _cmd_gen,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; 2 means divergence here
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
