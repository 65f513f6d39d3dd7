"""Problem instances ``min f(x) + g(x) + h(Ax)`` and the LASSO generators.

Desk-scale defaults keep the aspect ratios of the large experiments
(10:1 columns to rows for the Gaussian designs) at a size where a
reference solve takes seconds.
"""

import json
import math
import os
from dataclasses import asdict, dataclass, replace
from typing import Optional, Tuple

import numpy as np

from . import operators as ops
from .functions import (
    ParameterError,
    l1_prox,
    quadratic_loss_oracle,
    squared_distance,
    zero_indicator,
    zero_prox,
    zero_smooth,
)

__all__ = [
    "ProblemSpec",
    "InstanceRecipe",
    "gen_lasso",
    "gen_fused_lasso",
    "gen_bilinear",
    "difference_matrix",
    "objective",
    "reference_solve",
    "save_instance",
    "load_instance",
    "lasso_solution_identity",
]

difference_matrix = ops.difference_matrix


@dataclass(frozen=True)
class ProblemSpec:
    """``f(x) + g(x) + h(Ax)`` with its oracles.

    ``K``/``b``/``x_true`` describe the data when the instance came from a
    generator; ``x_ref``/``F_ref`` hold a reference solution once computed.
    """

    f: object
    g: object
    h: object
    A: ops.LinearMap
    name: str = "problem"
    K: Optional[ops.LinearMap] = None
    b: Optional[np.ndarray] = None
    x_true: Optional[np.ndarray] = None
    recipe: Optional["InstanceRecipe"] = None
    x_ref: Optional[np.ndarray] = None
    F_ref: Optional[float] = None

    def __post_init__(self):
        if self.f.dim != self.A.cols:
            raise ops.ShapeError(f"f acts on R^{self.f.dim} but A has {self.A.cols} columns")

    @property
    def n(self):
        return self.A.cols

    @property
    def m(self):
        return self.A.rows

    def objective(self, x):
        return objective(self, x)

    def with_reference(self, x_ref, F_ref):
        return replace(self, x_ref=np.asarray(x_ref, dtype=float), F_ref=float(F_ref))


@dataclass(frozen=True)
class InstanceRecipe:
    """Parameters of a synthetic LASSO / fused-LASSO instance.

    ``noise`` scales the Gaussian noise: its standard deviation is
    ``noise * ||K x_true|| / sqrt(m_data)``. ``x_true`` overrides the random
    sparse ground truth.
    """

    n: int = 500
    m_data: int = 50
    nnz: int = 5
    noise: float = 0.1
    mu: float = 20.0
    mu1: float = 20.0
    mu2: float = 2.0
    seed: int = 0
    design: str = "gaussian"
    x_true: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.n < 2 or self.m_data < 1:
            raise ParameterError("need n >= 2 and m_data >= 1")
        if not 0 <= self.nnz <= self.n:
            raise ParameterError("nnz must lie in [0, n]")
        if self.noise < 0:
            raise ParameterError("noise must be nonnegative")
        if min(self.mu, self.mu1, self.mu2) <= 0:
            raise ParameterError("penalties must be positive")
        if self.design not in ("gaussian", "identity"):
            raise ParameterError(f"unknown design {self.design!r}")
        if self.x_true is not None and len(self.x_true) != self.n:
            raise ParameterError("x_true must have length n")


def _data(recipe):
    rng = np.random.default_rng(recipe.seed)
    if recipe.design == "identity":
        K = ops.identity(recipe.n)
    else:
        K = ops.dense(rng.standard_normal((recipe.m_data, recipe.n)))
    if recipe.x_true is not None:
        x_true = np.asarray(recipe.x_true, dtype=float)
    else:
        x_true = np.zeros(recipe.n)
        support = rng.choice(recipe.n, size=recipe.nnz, replace=False)
        x_true[support] = rng.standard_normal(recipe.nnz)
    clean = K.apply(x_true)
    b = clean
    if recipe.noise > 0 and np.any(clean):
        std = recipe.noise * np.linalg.norm(clean) / math.sqrt(K.rows)
        b = clean + std * rng.standard_normal(K.rows)
    return K, b, x_true


def gen_fused_lasso(recipe):
    """``0.5||Kx - b||^2 + mu1 ||Bx||_1 + mu2 ||x||_1`` with B the difference operator.

    The data term is the smooth part; ``g = mu2 ||.||_1`` and
    ``h = mu1 ||.||_1`` composed with ``B``.
    """
    K, b, x_true = _data(recipe)
    return ProblemSpec(
        f=quadratic_loss_oracle(K, b),
        g=l1_prox(recipe.mu2),
        h=l1_prox(recipe.mu1),
        A=ops.difference_matrix(recipe.n),
        name="fused_lasso",
        K=K, b=b, x_true=x_true, recipe=recipe,
    )


def gen_lasso(recipe):
    """``0.5||Kx - b||^2 + mu ||x||_1`` split as ``f = 0``, ``g = mu||.||_1``, ``h = 0.5||. - b||^2``."""
    K, b, x_true = _data(recipe)
    return ProblemSpec(
        f=zero_smooth(recipe.n),
        g=l1_prox(recipe.mu),
        h=squared_distance(b),
        A=K,
        name="lasso",
        K=K, b=b, x_true=x_true, recipe=recipe,
    )


def gen_bilinear(A):
    """``min_x max_s <Ax, s>``: f = g = 0 and h the indicator of ``{0}``."""
    return ProblemSpec(f=zero_smooth(A.cols), g=zero_prox(), h=zero_indicator(), A=A, name="bilinear")


def lasso_solution_identity(b, mu):
    """Closed-form minimizer of ``0.5||x - b||^2 + mu ||x||_1``."""
    b = np.asarray(b, dtype=float)
    return np.sign(b) * np.maximum(np.abs(b) - mu, 0.0)


def objective(prob, x):
    """``f(x) + g(x) + h(Ax)``; ``inf`` when any term is infeasible."""
    x = np.asarray(x, dtype=float)
    total = prob.f.value(x) + prob.g.value(x) + prob.h.value(prob.A.apply(x))
    return math.inf if math.isinf(total) or math.isnan(total) else float(total)


def reference_solve(prob, budget=20000, tol=1e-13):
    """Estimate the optimum with a long run at classic-safe stepsizes.

    PD3O with ``r = 1/L`` and ``lam = 1/sigma^2`` when ``f`` is smooth,
    Chambolle-Pock with ``r = 1/sigma`` and ``lam = 1/sigma^2`` when
    ``f = 0``. Returns the iterate with the smallest objective seen.
    Raises :class:`pdsplit.solvers.DivergenceError` on blow-up.
    """
    # solvers imports this module's types lazily; keep the cycle one-way
    from .solvers import ConvergenceTrace, DivergenceError, StoppingRule, cp_step, initial_state, pd3o_step
    from .stepsizes import StepsizeConfig

    if budget < 1:
        raise ParameterError("budget must be >= 1")
    sigma = prob.A.sigma
    if prob.f.is_zero:
        kernel, alg = cp_step, "cp"
        r = 1.0 / sigma if sigma > 0 else 1.0
    else:
        kernel, alg = pd3o_step, "pd3o"
        r = 1.0 / prob.f.lipschitz_L
    lam = 1.0 / sigma ** 2 if sigma > 0 else 1.0
    cfg = StepsizeConfig(r, lam, 1.0)
    st = initial_state(alg, prob, cfg)
    best_x, best_F = st.x.copy(), objective(prob, st.x)
    z = st.vector()
    limit = StoppingRule().blowup * (1.0 + np.linalg.norm(z))
    for _ in range(budget):
        st = kernel(st, prob, cfg)
        z_new = st.vector()
        nz = np.linalg.norm(z_new)
        if not np.isfinite(nz) or nz > limit:
            raise DivergenceError("reference solve diverged", ConvergenceTrace(), st)
        F = objective(prob, st.x)
        if F < best_F:
            best_x, best_F = st.x.copy(), F
        if np.linalg.norm(z_new - z) <= tol * (1.0 + np.linalg.norm(z)):
            break
        z = z_new
    return best_x, best_F


# -- serialization ------------------------------------------------------------


def save_instance(prob, directory):
    """Write ``K.csv``, ``b.csv``, ``x_true.csv`` and ``meta.json``."""
    if prob.recipe is None:
        raise ValueError("only generated instances can be saved")
    os.makedirs(directory, exist_ok=True)
    ops.save_matrix_csv(os.path.join(directory, "K.csv"), prob.K)
    np.savetxt(os.path.join(directory, "b.csv"), prob.b, delimiter=",", fmt="%.17g")
    np.savetxt(os.path.join(directory, "x_true.csv"), prob.x_true, delimiter=",", fmt="%.17g")
    meta = asdict(prob.recipe)
    meta["problem"] = prob.name
    meta["rows"], meta["cols"] = prob.K.rows, prob.K.cols
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_instance(directory):
    """Rebuild a saved instance from its CSV data (not from the recipe seed)."""
    with open(os.path.join(directory, "meta.json")) as fh:
        meta = json.load(fh)
    kind = meta.pop("problem")
    meta.pop("rows"), meta.pop("cols")
    if meta.get("x_true") is not None:
        meta["x_true"] = tuple(meta["x_true"])
    recipe = InstanceRecipe(**meta)
    if recipe.design == "identity":
        K = ops.identity(recipe.n)
    else:
        K = ops.load_matrix_csv(os.path.join(directory, "K.csv"))
    b = np.atleast_1d(np.loadtxt(os.path.join(directory, "b.csv"), delimiter=","))
    x_true = np.atleast_1d(np.loadtxt(os.path.join(directory, "x_true.csv"), delimiter=","))
    common = dict(K=K, b=b, x_true=x_true, recipe=recipe)
    if kind == "lasso":
        return ProblemSpec(zero_smooth(K.cols), l1_prox(recipe.mu), squared_distance(b), K,
                           name="lasso", **common)
    if kind == "fused_lasso":
        return ProblemSpec(quadratic_loss_oracle(K, b), l1_prox(recipe.mu2), l1_prox(recipe.mu1),
                           ops.difference_matrix(K.cols), name="fused_lasso", **common)
    raise ValueError(f"unknown problem kind {kind!r}")

