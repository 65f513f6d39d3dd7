"""Spectral analysis of the bilinear saddle problem ``min_x max_s <Ax, s>``.

With ``f = g = 0`` and ``h`` the indicator of ``{0}`` the base iteration is
linear::

    s+ = (lam/r) A x + (I - lam A A^T) s
    x+ = x - r A^T s+

Along an eigenvector of ``A A^T`` with eigenvalue ``t`` the pair
``(s, Ax)`` evolves under

    [[1 - lam t,              lam / r  ],
     [-r t (1 - lam t),       1 - lam t]]

whose eigenvalues ``1 - lam t +- sqrt(-lam t (1 - lam t))`` depend on
``lam t`` only. The spectral radius stays below one exactly when
``lam t < 4/3``, so ``lam sigma^2 < 4/3`` cannot be relaxed for the family.
"""

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .functions import ParameterError

__all__ = [
    "SpectralVerdict",
    "iteration_matrix",
    "eigen_magnitudes",
    "necessary_condition",
    "random_operator",
    "empirical_divergence_check",
    "EmpiricalResult",
    "sweep",
    "sweep_csv",
    "BOUNDARY",
]

BOUNDARY = 4.0 / 3.0
CLASSES = ("converged", "diverged", "marginal")


@dataclass(frozen=True)
class SpectralVerdict:
    lam_theta: float
    eigen_magnitudes: tuple
    spectral_radius: float
    regime: str  # complex_pair | double_zero | real_pair


def iteration_matrix(lam, theta_eig, r):
    """The literal 2x2 recursion matrix for one eigenvalue ``theta_eig`` of ``A A^T``."""
    lt = lam * theta_eig
    return np.array([[1.0 - lt, lam / r], [-r * theta_eig * (1.0 - lt), 1.0 - lt]])


def eigen_magnitudes(lam_theta):
    """Moduli of the two eigenvalues of the recursion matrix at ``lam_theta``.

    Examples
    --------
    >>> eigen_magnitudes(1.0).spectral_radius
    0.0
    >>> round(eigen_magnitudes(0.5).spectral_radius, 5)
    0.70711
    >>> eigen_magnitudes(4 / 3).spectral_radius
    1.0
    """
    lt = float(lam_theta)
    if not lt >= 0:
        raise ParameterError(f"lam_theta must be nonnegative, got {lam_theta!r}")
    if lt < 1.0:
        mag = math.sqrt(1.0 - lt)
        mags, regime = (mag, mag), "complex_pair"
    elif lt == 1.0:
        mags, regime = (0.0, 0.0), "double_zero"
    else:
        root = math.sqrt(lt * (lt - 1.0))
        mags, regime = (abs(1.0 - lt + root), abs(1.0 - lt - root)), "real_pair"
    return SpectralVerdict(lt, mags, max(mags), regime)


def necessary_condition(lam, sigma):
    """``lam sigma^2 < 4/3``: the radius at the top eigenvalue is below one."""
    if not (lam > 0 and sigma > 0):
        raise ParameterError("lam and sigma must be positive")
    return lam * sigma ** 2 < BOUNDARY


def random_operator(m, n, seed=0, cond=2.0):
    """Dense ``m x n`` map with random singular vectors and singular values in ``[1/cond, 1]``.

    The bounded condition number keeps every mode of the bilinear recursion
    well away from radius one except the one the stepsize puts there, so a
    few hundred iterations separate decay from growth.
    """
    if cond < 1:
        raise ParameterError("cond must be >= 1")
    rng = np.random.default_rng(seed)
    k = min(m, n)
    U, _ = np.linalg.qr(rng.standard_normal((m, k)))
    V, _ = np.linalg.qr(rng.standard_normal((n, k)))
    sv = np.sort(rng.uniform(1.0 / cond, 1.0, size=k))[::-1]
    sv[0] = 1.0
    return ops.dense((U * sv) @ V.T)


@dataclass(frozen=True)
class EmpiricalResult:
    classification: str
    rate: float
    iterations: int

    def __str__(self):
        return self.classification


def _top_right_vector(A, seed):
    rng = np.random.default_rng(seed + 1)
    v = rng.standard_normal(A.cols)
    for _ in range(200):
        w = A.apply_adjoint(A.apply(v))
        nw = np.linalg.norm(w)
        if nw == 0:
            return v / np.linalg.norm(v)
        v = w / nw
    return v


def empirical_divergence_check(A, cfg, iters=2000, seed=0, band=1e-3):
    """Run the bilinear recursion and classify its long-run behaviour.

    Starts from a random ``(x0, s0)`` with the top right singular vector of
    `A` mixed into ``x0``. Tracks ``||(A^T s, A x)||``; components of ``s``
    in the null space of ``A^T`` and of ``x`` in the null space of ``A``
    never move and are left out. The per-iteration rate is estimated from
    the running maxima of the two halves of the last quartile.

    Returns an :class:`EmpiricalResult` whose ``classification`` is
    ``'converged'`` (rate below ``1 - band`` or the norm fell below
    ``1e-13`` of its start), ``'diverged'`` (rate above ``1 + band`` or
    growth by ``1e13``) or ``'marginal'``.
    """
    if iters < 100:
        raise ParameterError("iters must be >= 100")
    r, lam = cfg.r, cfg.lam
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.cols)
    s = rng.standard_normal(A.rows)
    x = x + math.sqrt(A.cols) * _top_right_vector(A, seed)

    def measure(s, x):
        return math.hypot(np.linalg.norm(A.apply_adjoint(s)), np.linalg.norm(A.apply(x)))

    n0 = measure(s, x)
    if n0 == 0.0:
        return EmpiricalResult("converged", 0.0, 0)
    norms = np.empty(iters)
    for k in range(iters):
        s = (lam / r) * A.apply(x) + s - lam * A.apply(A.apply_adjoint(s))
        x = x - r * A.apply_adjoint(s)
        nk = measure(s, x)
        norms[k] = nk
        if nk <= 1e-13 * n0:
            return EmpiricalResult("converged", _rate(norms[: k + 1]), k + 1)
        if not math.isfinite(nk) or nk >= 1e13 * n0:
            return EmpiricalResult("diverged", _rate(norms[: k + 1]), k + 1)
    rate = _rate(norms)
    if rate < 1.0 - band:
        label = "converged"
    elif rate > 1.0 + band:
        label = "diverged"
    else:
        label = "marginal"
    return EmpiricalResult(label, rate, iters)


def _rate(norms):
    tail = norms[3 * len(norms) // 4:]
    half = len(tail) // 2
    if half == 0:
        return float("nan")
    first, second = tail[:half].max(), tail[half:].max()
    if not (first > 0 and math.isfinite(second)):
        return float("nan")
    return float((second / first) ** (1.0 / half))


def sweep(grid, A=None, r=1.0, iters=2000, seed=0):
    """Radius at the top eigenvalue and empirical label for each ``lam sigma^2`` in `grid`.

    `A` defaults to :func:`random_operator` ``(8, 8, seed)``. Returns a list
    of ``(lam_sigma2, radius, classification)`` tuples.
    """
    from .stepsizes import StepsizeConfig

    grid = [float(g) for g in grid]
    if not grid:
        raise ParameterError("empty grid")
    if A is None:
        A = random_operator(8, 8, seed)
    sigma = A.sigma
    rows = []
    for ls2 in grid:
        if not ls2 > 0:
            raise ParameterError("grid values must be positive")
        radius = eigen_magnitudes(ls2).spectral_radius
        res = empirical_divergence_check(A, StepsizeConfig(r, ls2 / sigma ** 2), iters, seed)
        rows.append((ls2, radius, res.classification))
    return rows


def sweep_csv(rows):
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("lam_sigma2", "radius", "classification"))
    for ls2, radius, label in rows:
        w.writerow((repr(ls2), repr(radius), label))
    return out.getvalue()
