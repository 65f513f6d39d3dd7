"""Function oracles: smooth gradients, proximal maps and conjugate proxes.

The splitting schemes in :mod:`pdsplit.solvers` touch the three functions of
``f(x) + g(x) + h(Ax)`` only through

* ``f.gradient`` (with Lipschitz constant ``f.lipschitz_L``),
* ``g.prox(tau, v)`` -- the resolvent ``(I + tau dg)^{-1}``,
* ``conjugate_prox(h, tau, v)`` -- the resolvent ``(I + tau dh*)^{-1}``.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .operators import LinearMap, ShapeError

__all__ = [
    "SmoothOracle",
    "ProxOracle",
    "ParameterError",
    "quadratic_loss_oracle",
    "zero_smooth",
    "l1_prox",
    "zero_prox",
    "zero_indicator",
    "box_indicator",
    "squared_distance",
    "conjugate_prox",
    "moreau_conjugate_prox",
]


class ParameterError(ValueError):
    """Invalid scalar parameter (non-positive stepsize, penalty, ...)."""


@dataclass(frozen=True)
class SmoothOracle:
    """Convex differentiable ``f`` with ``lipschitz_L``-Lipschitz gradient."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    lipschitz_L: float
    dim: int
    name: str = "smooth"
    is_zero: bool = False


@dataclass(frozen=True)
class ProxOracle:
    """Closed convex function with a proximal map.

    ``prox(tau, v)`` returns ``argmin_y phi(y) + ||y - v||^2 / (2 tau)``.
    ``value`` may return ``inf`` outside the domain. ``conj_prox`` is an
    optional closed form for the prox of the conjugate; when absent,
    :func:`conjugate_prox` falls back to the Moreau decomposition.
    """

    value: Callable[[np.ndarray], float]
    prox: Callable[[float, np.ndarray], np.ndarray]
    name: str = "prox"
    conj_prox: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    is_zero: bool = False


def _positive(tau, what="stepsize"):
    if not tau > 0:
        raise ParameterError(f"{what} must be positive, got {tau!r}")
    return float(tau)


# -- smooth part --------------------------------------------------------------


def quadratic_loss_oracle(K, b):
    """``f(x) = 0.5 ||Kx - b||^2`` with ``L = sigma(K)^2``."""
    if not isinstance(K, LinearMap):
        raise TypeError("K must be a LinearMap")
    b = np.asarray(b, dtype=float)
    if b.shape != (K.rows,):
        raise ShapeError(f"b has shape {b.shape}, expected ({K.rows},)")

    def value(x):
        r = K.apply(x) - b
        return 0.5 * float(r @ r)

    def gradient(x):
        return K.apply_adjoint(K.apply(x) - b)

    return SmoothOracle(value, gradient, K.sigma ** 2, K.cols, name="quadratic_loss")


def zero_smooth(n):
    def value(x):
        return 0.0

    def gradient(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return SmoothOracle(value, gradient, 0.0, int(n), name="zero", is_zero=True)


# -- proximable parts ---------------------------------------------------------


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def l1_prox(mu):
    """``mu ||.||_1``; prox is soft-thresholding, conjugate prox is a box projection."""
    mu = _positive(mu, "mu")

    def value(v):
        return mu * float(np.sum(np.abs(v)))

    def prox(tau, v):
        tau = _positive(tau)
        return _soft(np.asarray(v, dtype=float), tau * mu)

    def conj(tau, v):
        # h* is the indicator of the l_inf ball of radius mu
        _positive(tau)
        return np.clip(v, -mu, mu)

    return ProxOracle(value, prox, name=f"l1({mu:g})", conj_prox=conj)


def box_indicator(bound):
    """Indicator of ``{v : ||v||_inf <= bound}``."""
    bound = _positive(bound, "bound")

    def value(v):
        return 0.0 if np.all(np.abs(v) <= bound) else np.inf

    def prox(tau, v):
        _positive(tau)
        return np.clip(v, -bound, bound)

    def conj(tau, v):
        tau = _positive(tau)
        return _soft(np.asarray(v, dtype=float), tau * bound)

    return ProxOracle(value, prox, name=f"box({bound:g})", conj_prox=conj)


def squared_distance(b):
    """``0.5 ||v - b||^2``; conjugate ``0.5 ||s||^2 + <b, s>``."""
    b = np.asarray(b, dtype=float)

    def value(v):
        d = v - b
        return 0.5 * float(d @ d)

    def prox(tau, v):
        tau = _positive(tau)
        return (v + tau * b) / (1.0 + tau)

    def conj(tau, v):
        tau = _positive(tau)
        return (v - tau * b) / (1.0 + tau)

    return ProxOracle(value, prox, name="squared_distance", conj_prox=conj)


def zero_prox():
    """The zero function; its conjugate is the indicator of ``{0}``."""

    def value(v):
        return 0.0

    def prox(tau, v):
        _positive(tau)
        return np.array(v, dtype=float)

    def conj(tau, v):
        _positive(tau)
        return np.zeros_like(np.asarray(v, dtype=float))

    return ProxOracle(value, prox, name="zero", conj_prox=conj, is_zero=True)


def zero_indicator():
    """Indicator of ``{0}``; its conjugate is zero, so the conjugate prox is the identity.

    Composed with ``A`` this turns the saddle problem into the bilinear
    ``min_x max_s <Ax, s>``.
    """

    def value(v):
        return 0.0 if not np.any(v) else np.inf

    def prox(tau, v):
        _positive(tau)
        return np.zeros_like(np.asarray(v, dtype=float))

    def conj(tau, v):
        _positive(tau)
        return np.array(v, dtype=float)

    return ProxOracle(value, prox, name="zero_indicator", conj_prox=conj)


# -- conjugates ----------------------------------------------------------------


def moreau_conjugate_prox(h, tau, v):
    """``prox_{tau h*}(v) = v - tau prox_{h/tau}(v/tau)``."""
    tau = _positive(tau)
    v = np.asarray(v, dtype=float)
    return v - tau * h.prox(1.0 / tau, v / tau)


def conjugate_prox(h, tau, v):
    """Resolvent ``(I + tau dh*)^{-1}(v)``, closed form when registered."""
    tau = _positive(tau)
    if h.conj_prox is not None:
        return h.conj_prox(tau, np.asarray(v, dtype=float))
    return moreau_conjugate_prox(h, tau, v)
