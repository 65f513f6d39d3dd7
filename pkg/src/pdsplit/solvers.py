"""Iteration kernels, state maps and the driver loop.

The base iteration works on a triple ``(s, x, zeta)`` with primal stepsize
``r`` and stepsize product ``lam``::

    s+    = prox_{(lam/r) h*}( (lam/r) A zeta + (I - lam A A^T) s )
    x+    = zeta - r A^T s+
    zeta+ = prox_{r g}( x+ - r A^T s+ - r grad f(x+) ) - x+ + zeta

AFBA, PD3O (applied to the dual), Chambolle-Pock (``f = 0``) and PAPC
(``g = 0``) generate the same sequences under the maps in
:func:`map_states`. All kernels only use ``A.apply``/``A.apply_adjoint``;
``A A^T`` is never formed.
"""

import csv
import io
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .functions import conjugate_prox
from .operators import ShapeError
from .stepsizes import check_relaxed

__all__ = [
    "ALGORITHMS",
    "SolverState",
    "StoppingRule",
    "TraceRecord",
    "ConvergenceTrace",
    "DivergenceError",
    "StepsizeError",
    "UsageError",
    "base_step",
    "afba_step",
    "pd3o_step",
    "cp_step",
    "papc_step",
    "step",
    "map_states",
    "to_base",
    "initial_state",
    "solve",
    "optimality_residual",
    "lyapunov_phi",
    "default_theta_tilde",
]

ALGORITHMS = ("base", "afba", "pd3o", "cp", "papc")
_ALIASES = {"chambolle_pock": "cp", "chambolle-pock": "cp"}


class UsageError(ValueError):
    """Algorithm applied outside its scope, or an unsupported state map."""


class StepsizeError(ValueError):
    def __init__(self, verdict):
        super().__init__(
            f"stepsizes violate the relaxed condition: {verdict.binding} "
            f"(margin {verdict.margin:.3g})"
        )
        self.verdict = verdict


class DivergenceError(RuntimeError):
    """Iterates became non-finite or blew up; carries the trace so far."""

    def __init__(self, message, trace, state):
        super().__init__(message)
        self.trace = trace
        self.state = state


def _canon(algorithm):
    algorithm = _ALIASES.get(algorithm, algorithm)
    if algorithm not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {algorithm!r}")
    return algorithm


@dataclass(frozen=True)
class SolverState:
    """Iterate of one algorithm.

    Field meaning depends on ``algorithm``:

    ========  ======  ======  ===============================
    algo      s       x       zeta
    ========  ======  ======  ===============================
    base      s       x       zeta (length n)
    afba      s1      x1      x1-bar (length n)
    pd3o      s2      x2      z2 (length m)
    cp        s3      x3      None
    papc      s4      x4      None
    ========  ======  ======  ===============================
    """

    s: np.ndarray
    x: np.ndarray
    zeta: Optional[np.ndarray] = None
    algorithm: str = "base"

    def vector(self):
        parts = [self.s, self.x]
        if self.zeta is not None:
            parts.append(self.zeta)
        return np.concatenate(parts)

    def copy(self):
        z = None if self.zeta is None else self.zeta.copy()
        return SolverState(self.s.copy(), self.x.copy(), z, self.algorithm)


def _dims(prob, st):
    m, n = prob.A.rows, prob.A.cols
    if st.s.shape != (m,) or st.x.shape != (n,):
        raise ShapeError(
            f"state dims (s {st.s.shape}, x {st.x.shape}) do not match A {prob.A.shape}"
        )
    return m, n


# -- kernels ------------------------------------------------------------------


def base_step(st, prob, cfg):
    _dims(prob, st)
    A, r, lam = prob.A, cfg.r, cfg.lam
    s, zeta = st.s, st.zeta
    tau = lam / r
    s_new = conjugate_prox(prob.h, tau, tau * A.apply(zeta) + s - lam * A.apply(A.apply_adjoint(s)))
    Ats = r * A.apply_adjoint(s_new)
    x_new = zeta - Ats
    z_new = prob.g.prox(r, x_new - Ats - r * prob.f.gradient(x_new)) - x_new + zeta
    return SolverState(s_new, x_new, z_new, "base")


def afba_step(st, prob, cfg):
    _dims(prob, st)
    A, r, lam = prob.A, cfg.r, cfg.lam
    s1, xb = st.s, st.zeta
    tau = lam / r
    s_new = conjugate_prox(prob.h, tau, s1 + tau * A.apply(xb))
    x_new = xb - r * A.apply_adjoint(s_new - s1)
    xb_new = prob.g.prox(r, x_new - r * A.apply_adjoint(s_new) - r * prob.f.gradient(x_new))
    return SolverState(s_new, x_new, xb_new, "afba")


def pd3o_step(st, prob, cfg):
    """PD3O on ``(s2, x2, z2)``.

    The gradient is taken at the predictor ``x2 - r A^T (s2+ - s2)`` rather
    than at ``x2``. With this choice the ``(s2, x2)`` sequence coincides
    with AFBA's ``(s1, x1-bar)``; evaluating at ``x2`` breaks that unless
    ``grad f`` is constant and can stall at stepsizes the base scheme accepts.
    """
    _dims(prob, st)
    A, r, lam = prob.A, cfg.r, cfg.lam
    s2, x2, z2 = st.s, st.x, st.zeta
    tau = lam / r
    s_new = conjugate_prox(prob.h, tau, z2)
    pred = x2 - r * A.apply_adjoint(s_new - s2)
    v = x2 - lam * A.apply_adjoint(A.apply(x2)) - r * prob.f.gradient(pred)
    x_new = prob.g.prox(r, v - r * A.apply_adjoint(2.0 * s_new - z2))
    z_new = s_new + tau * A.apply(x_new)
    return SolverState(s_new, x_new, z_new, "pd3o")


def cp_step(st, prob, cfg):
    if not prob.f.is_zero:
        raise UsageError("Chambolle-Pock requires f = 0")
    _dims(prob, st)
    A, r, lam = prob.A, cfg.r, cfg.lam
    s3, x3 = st.s, st.x
    tau = lam / r
    s_new = conjugate_prox(prob.h, tau, s3 + tau * A.apply(x3))
    x_new = prob.g.prox(r, x3 - r * A.apply_adjoint(2.0 * s_new - s3))
    return SolverState(s_new, x_new, None, "cp")


def papc_step(st, prob, cfg):
    if not prob.g.is_zero:
        raise UsageError("PAPC requires g = 0")
    _dims(prob, st)
    A, r, lam = prob.A, cfg.r, cfg.lam
    s4, x4 = st.s, st.x
    tau = lam / r
    xg = x4 - r * prob.f.gradient(x4)
    s_new = conjugate_prox(prob.h, tau, tau * A.apply(xg) + s4 - lam * A.apply(A.apply_adjoint(s4)))
    x_new = xg - r * A.apply_adjoint(s_new)
    return SolverState(s_new, x_new, None, "papc")


_KERNELS = {
    "base": base_step,
    "afba": afba_step,
    "pd3o": pd3o_step,
    "cp": cp_step,
    "papc": papc_step,
}


def step(st, prob, cfg):
    return _KERNELS[_canon(st.algorithm)](st, prob, cfg)


# -- state maps ---------------------------------------------------------------


def map_states(src, dst, st, cfg, A, prev=None):
    """Translate a state between equivalent algorithms.

    Supported pairs: base<->afba, afba<->pd3o, base<->pd3o, base<->cp.
    Directions that reconstruct ``x`` from the previous iterate (pd3o->afba,
    pd3o->base, cp->base) need `prev`, the state of the source algorithm one
    iteration earlier.
    """
    src, dst = _canon(src), _canon(dst)
    if st.algorithm != src:
        raise UsageError(f"state belongs to {st.algorithm!r}, not {src!r}")
    r, lam = cfg.r, cfg.lam
    tau = lam / r
    if src == dst:
        return st.copy()

    def need_prev():
        if prev is None:
            raise UsageError(f"map {src}->{dst} needs the previous {src} state")
        if prev.algorithm != src:
            raise UsageError("previous state belongs to a different algorithm")
        return prev

    pair = (src, dst)
    if pair == ("base", "afba"):
        return SolverState(st.s.copy(), st.x.copy(), st.zeta - r * A.apply_adjoint(st.s), "afba")
    if pair == ("afba", "base"):
        return SolverState(st.s.copy(), st.x.copy(), st.zeta + r * A.apply_adjoint(st.s), "base")
    if pair == ("afba", "pd3o"):
        return SolverState(st.s.copy(), st.zeta.copy(), st.s + tau * A.apply(st.zeta), "pd3o")
    if pair == ("pd3o", "afba"):
        p = need_prev()
        x1 = p.x - r * A.apply_adjoint(st.s - p.s)
        return SolverState(st.s.copy(), x1, st.x.copy(), "afba")
    if pair == ("base", "pd3o"):
        x2 = st.zeta - r * A.apply_adjoint(st.s)
        z2 = st.s - lam * A.apply(A.apply_adjoint(st.s)) + tau * A.apply(st.zeta)
        return SolverState(st.s.copy(), x2, z2, "pd3o")
    if pair == ("pd3o", "base"):
        p = need_prev()
        x = p.x - r * A.apply_adjoint(st.s - p.s)
        return SolverState(st.s.copy(), x, st.x + r * A.apply_adjoint(st.s), "base")
    if pair == ("base", "cp"):
        return SolverState(st.s.copy(), st.zeta - r * A.apply_adjoint(st.s), None, "cp")
    if pair == ("cp", "base"):
        p = need_prev()
        x = p.x - r * A.apply_adjoint(st.s - p.s)
        return SolverState(st.s.copy(), x, st.x + r * A.apply_adjoint(st.s), "base")
    raise UsageError(f"no published relation between {src} and {dst}")


def to_base(st, prob, cfg, prev=None):
    """Base-algorithm view of `st`, or ``None`` when it needs a missing `prev`."""
    alg = st.algorithm
    if alg == "base":
        return st
    if alg == "afba":
        return map_states("afba", "base", st, cfg, prob.A)
    if alg == "papc":
        # g = 0: zeta = x - r grad f(x)
        return SolverState(st.s, st.x, st.x - cfg.r * prob.f.gradient(st.x), "base")
    if prev is None:
        return None
    return map_states(alg, "base", st, cfg, prob.A, prev=prev)


def initial_state(algorithm, prob, cfg, x0=None, s0=None):
    """Default start ``x0 = 0, s0 = 0, zeta0 = x0`` mapped to `algorithm`.

    For PAPC emulation by the base scheme pass ``algorithm='papc'`` and map
    with :func:`to_base`, which sets ``zeta0 = x0 - r grad f(x0)``.
    """
    algorithm = _canon(algorithm)
    m, n = prob.A.rows, prob.A.cols
    x0 = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    s0 = np.zeros(m) if s0 is None else np.array(s0, dtype=float)
    base = SolverState(s0, x0, x0.copy(), "base")
    if algorithm == "base":
        return base
    if algorithm in ("afba", "pd3o", "cp"):
        return map_states("base", algorithm, base, cfg, prob.A)
    return SolverState(s0, x0, None, "papc")


# -- residuals and Lyapunov diagnostic ----------------------------------------


def optimality_residual(st, prob, cfg):
    """``||T(z) - z|| / (1 + ||z||)`` for the base map ``T``; zero iff fixed point."""
    if st.algorithm != "base":
        raise UsageError("optimality_residual expects a base state")
    nxt = base_step(st, prob, cfg)
    z = st.vector()
    return float(np.linalg.norm(nxt.vector() - z) / (1.0 + np.linalg.norm(z)))


def default_theta_tilde(cfg, sigma):
    ls2 = cfg.lam * sigma ** 2
    bound = cfg.theta if ls2 == 0 else min(cfg.theta, 1.0 / ls2)
    return 0.99 * bound


def lyapunov_phi(curr, prev, fixed, cfg, prob, theta_tilde=None):
    """Lyapunov value of base iterate `curr` relative to fixed point `fixed`.

    With ``alpha = theta_tilde / (1 - theta)`` (0 when ``theta = 1``),
    ``beta = (1 + alpha)(1 - rL/2)``, ``M = I - theta lam A A^T`` and
    ``w = alpha`` (``w = 1`` when ``theta = 1``)::

        Phi = 1/(2r) ||x - x*||^2 + w/(2r) ||zeta - zeta*||^2
            + r/(2 lam) (||s - s*||^2 + w ||s - s*||^2_{I - lam A A^T})
            + beta r/(4 lam) ||ds||_M^2 + beta r (1 - theta)/4 ||A^T ds||^2
            + alpha/(2r) (1 - rL/2) ||dzeta||^2

    where ``ds = s - prev.s`` and ``dzeta = zeta - prev.zeta``. This is the
    potential obtained by adding ``alpha`` times the zeta-descent inequality
    to the x-descent inequality of the convergence argument. For ``theta = 1``
    the zeta inequality holds on its own and is added with weight one, giving
    ``s``-weight ``M + I``. Along runs within the relaxed condition the
    sequence is nonincreasing from the first iteration on.
    """
    A, r, lam, theta = prob.A, cfg.r, cfg.lam, cfg.theta
    L = prob.f.lipschitz_L
    sigma = A.sigma
    if theta_tilde is None:
        theta_tilde = default_theta_tilde(cfg, sigma)
    if not (0.0 < theta_tilde < theta) or theta_tilde * lam * sigma ** 2 >= 1.0:
        raise ValueError(f"theta_tilde={theta_tilde!r} outside (0, theta) or I - theta_tilde lam AA^T not PD")
    if theta < 1.0:
        alpha = theta_tilde / (1.0 - theta)
        w = alpha
    else:
        alpha, w = 0.0, 1.0
    beta = (1.0 + alpha) * (1.0 - r * L / 2.0)

    dx = curr.x - fixed.x
    dz = curr.zeta - fixed.zeta
    dss = curr.s - fixed.s
    At_dss = A.apply_adjoint(dss)
    ds = curr.s - prev.s
    At_ds = A.apply_adjoint(ds)
    dzeta = curr.zeta - prev.zeta

    sq = lambda v: float(v @ v)  # noqa: E731
    phi = sq(dx) / (2 * r) + w * sq(dz) / (2 * r)
    phi += r / (2 * lam) * (sq(dss) + w * (sq(dss) - lam * sq(At_dss)))
    phi += beta * r / (4 * lam) * (sq(ds) - theta * lam * sq(At_ds))
    phi += beta * r * (1 - theta) / 4 * sq(At_ds)
    phi += alpha / (2 * r) * (1 - r * L / 2) * sq(dzeta)
    return phi


# -- trace and driver ---------------------------------------------------------


@dataclass
class StoppingRule:
    max_iter: int = 1000
    tol: float = 1e-9
    record_every: int = 1
    blowup: float = 1e12


@dataclass
class TraceRecord:
    iter: int
    objective: float
    fp_residual: Optional[float]
    dx: Optional[float]
    ds: Optional[float]
    phi: Optional[float]
    wall_ms: Optional[float]


CSV_HEADER = ("iter", "objective", "fp_residual", "dx", "ds", "phi", "wall_ms")


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, int):
        return str(v)
    return repr(float(v))


@dataclass
class ConvergenceTrace:
    records: List[TraceRecord] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    previous: Optional[SolverState] = None

    def append(self, rec):
        if self.records and rec.iter <= self.records[-1].iter:
            raise ValueError("trace iterations must increase")
        self.records.append(rec)

    def column(self, name):
        return np.array(
            [np.nan if getattr(r, name) is None else getattr(r, name) for r in self.records],
            dtype=float,
        )

    def to_csv(self, fh=None):
        """Write ``iter,objective,fp_residual,dx,ds,phi,wall_ms``; returns text if `fh` is None."""
        out = io.StringIO() if fh is None else fh
        w = csv.writer(out, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in self.records:
            w.writerow([_fmt(getattr(rec, k)) for k in CSV_HEADER])
        if fh is None:
            return out.getvalue()
        return None

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        trace = cls()
        for row in rows:
            def get(k):
                return None if row[k] == "" else float(row[k])
            trace.append(TraceRecord(int(row["iter"]), get("objective"), get("fp_residual"),
                                     get("dx"), get("ds"), get("phi"), get("wall_ms")))
        return trace


def solve(prob, algorithm, cfg, init=None, stop=None, *, override=False,
          fixed=None, theta_tilde=None, timing=True):
    """Run `algorithm` on `prob` until the fixed-point residual drops below tol.

    Parameters
    ----------
    prob : ProblemSpec
    algorithm : {'base', 'afba', 'pd3o', 'cp', 'papc'}
    cfg : StepsizeConfig
    init : SolverState, optional
        Defaults to :func:`initial_state`.
    stop : StoppingRule, optional
    override : bool
        Skip the relaxed-condition check (for divergence studies).
    fixed : SolverState, optional
        Base-algorithm fixed point; when given, the Lyapunov value is
        recorded in the ``phi`` column.
    timing : bool
        Record wall-clock milliseconds. Turn off for byte-identical traces.

    Returns
    -------
    state : SolverState
    trace : ConvergenceTrace

    Raises
    ------
    StepsizeError
        Stepsizes fail the relaxed condition and `override` is false.
    DivergenceError
        Non-finite iterate or norm beyond ``stop.blowup * (1 + ||init||)``.
    """
    algorithm = _canon(algorithm)
    stop = stop or StoppingRule()
    if not override:
        verdict = check_relaxed(cfg, prob.f.lipschitz_L, prob.A.sigma)
        if not verdict.satisfied:
            raise StepsizeError(verdict)
    if init is None:
        init = initial_state(algorithm, prob, cfg)
    if init.algorithm != algorithm:
        raise UsageError(f"init state is for {init.algorithm!r}, not {algorithm!r}")
    kernel = _KERNELS[algorithm]
    every = max(1, int(stop.record_every))

    t0 = time.perf_counter()
    st = init
    z = st.vector()
    limit = stop.blowup * (1.0 + np.linalg.norm(z))
    trace = ConvergenceTrace()

    base_prev = base_curr = None
    phi0 = None
    if fixed is not None:
        base_curr = to_base(st, prob, cfg)
        if base_curr is not None:
            phi0 = lyapunov_phi(base_curr, base_curr, fixed, cfg, prob, theta_tilde)

    def ms():
        return (time.perf_counter() - t0) * 1e3 if timing else None

    trace.append(TraceRecord(0, prob.objective(st.x), None, None, None, phi0, ms()))
    prev = None
    for k in range(1, int(stop.max_iter) + 1):
        new = kernel(st, prob, cfg)
        z_new = new.vector()
        nz = np.linalg.norm(z_new)
        if not np.isfinite(nz) or nz > limit:
            trace.iterations = k - 1
            trace.previous = prev
            raise DivergenceError(f"{algorithm} diverged at iteration {k}", trace, st)
        res = float(np.linalg.norm(z_new - z) / (1.0 + np.linalg.norm(z)))
        done = res <= stop.tol
        phi = None
        if fixed is not None:
            base_prev = base_curr
            base_curr = to_base(new, prob, cfg, prev=st)
            if base_curr is not None and base_prev is not None:
                phi = lyapunov_phi(base_curr, base_prev, fixed, cfg, prob, theta_tilde)
        if done or k % every == 0 or k == stop.max_iter:
            trace.append(TraceRecord(
                k, prob.objective(new.x), res,
                float(np.linalg.norm(new.x - st.x)), float(np.linalg.norm(new.s - st.s)),
                phi, ms(),
            ))
        prev, st, z = st, new, z_new
        trace.iterations = k
        if done:
            trace.converged = True
            break
    trace.previous = prev
    return st, trace
