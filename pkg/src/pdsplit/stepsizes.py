"""Stepsize conditions for the primal-dual family.

Throughout, ``r`` is the primal stepsize and ``lam`` the product of primal
and dual stepsizes, so the dual stepsize is ``lam / r``.

The relaxed condition is ``r L / 2 < Gamma(theta)`` and
``theta * lam * sigma^2 <= 1`` for a free ``theta`` in ``(3/4, 1]``, where
``Gamma(theta) = (4 theta - 3) / (2 theta - 1)``. The primal inequality is
strict; a non-strict variant is sometimes quoted but is not used here.
"""

import math
from dataclasses import dataclass

from .functions import ParameterError

__all__ = [
    "StepsizeConfig",
    "ConditionVerdict",
    "CLASSIC_ALGORITHMS",
    "gamma",
    "check_relaxed",
    "check_classic",
    "max_lambda",
    "auto_theta",
    "r_ceiling",
]

CLASSIC_ALGORITHMS = ("condat_vu", "pdfp", "afba", "pd3o", "chambolle_pock", "papc")


def _check_theta(theta):
    if not (0.75 < theta <= 1.0):
        raise ParameterError(f"theta must lie in (3/4, 1], got {theta!r}")


@dataclass(frozen=True)
class StepsizeConfig:
    r: float
    lam: float
    theta: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise ParameterError(f"r must be positive, got {self.r!r}")
        if not self.lam > 0:
            raise ParameterError(f"lambda must be positive, got {self.lam!r}")
        _check_theta(self.theta)

    @property
    def dual_step(self):
        return self.lam / self.r


@dataclass(frozen=True)
class ConditionVerdict:
    """Outcome of a stepsize check.

    ``margin`` is the smallest slack over the constituent inequalities
    (negative when violated) and ``binding`` names the inequality attaining
    it. Strict inequalities need a positive slack.
    """

    satisfied: bool
    margin: float
    binding: str

    def __bool__(self):
        return self.satisfied


def _verdict(constraints):
    # constraints: (name, slack, strict)
    def holds(c):
        return c[1] > 0 if c[2] else c[1] >= 0

    ok = all(holds(c) for c in constraints)
    # on ties the violated inequality is the one to report
    name, slack, _ = min(constraints, key=lambda c: (c[1], holds(c)))
    return ConditionVerdict(ok, float(slack), name)


def gamma(theta):
    _check_theta(theta)
    return (4.0 * theta - 3.0) / (2.0 * theta - 1.0)


def check_relaxed(cfg, L, sigma):
    if L < 0 or sigma < 0:
        raise ParameterError("L and sigma must be nonnegative")
    cons = [("theta*lam*sigma^2 <= 1", 1.0 - cfg.theta * cfg.lam * sigma ** 2, False)]
    if L > 0:
        cons.append(("r*L/2 < Gamma(theta)", gamma(cfg.theta) - cfg.r * L / 2.0, True))
    return _verdict(cons)


def check_classic(algorithm, cfg, L, sigma):
    """Check one of the classical (non-relaxed) conditions.

    ``algorithm`` is one of :data:`CLASSIC_ALGORITHMS`.
    """
    r, lam = cfg.r, cfg.lam
    ls2 = lam * sigma ** 2
    if algorithm == "condat_vu":
        cons = [("lam*sigma^2 + r*L/2 <= 1", 1.0 - ls2 - r * L / 2.0, False)]
    elif algorithm in ("pdfp", "pd3o", "papc"):
        cons = [
            ("r*L/2 < 1", 1.0 - r * L / 2.0, True),
            ("lam*sigma^2 <= 1", 1.0 - ls2, False),
        ]
    elif algorithm == "afba":
        cons = [(
            "lam*sigma^2 + sqrt(lam)*sigma + r*L <= 2",
            2.0 - ls2 - math.sqrt(lam) * sigma - r * L,
            False,
        )]
    elif algorithm == "chambolle_pock":
        cons = [("lam*sigma^2 <= 1", 1.0 - ls2, False)]
    else:
        raise ParameterError(f"unknown algorithm {algorithm!r}")
    return _verdict(cons)


def max_lambda(theta, sigma):
    _check_theta(theta)
    if not sigma > 0:
        raise ParameterError("sigma must be positive")
    lam = 1.0 / (theta * sigma ** 2)
    # land on the feasible side of the non-strict check after rounding
    while theta * lam * sigma ** 2 > 1.0:
        lam = math.nextafter(lam, 0.0)
    return lam


def r_ceiling(theta, L):
    """Supremum of admissible ``r`` under the relaxed condition (``inf`` if ``L == 0``)."""
    if L == 0:
        return math.inf
    return gamma(theta) * 2.0 / L


def auto_theta(lam, sigma):
    """Largest ``theta`` in ``(3/4, 1]`` with ``theta * lam * sigma^2 <= 1``.

    The largest feasible ``theta`` gives the loosest ceiling on ``r``.
    Raises when ``lam * sigma^2 >= 4/3``, where no ``theta`` works.
    """
    ls2 = lam * sigma ** 2
    if ls2 <= 1.0:
        return 1.0
    theta = 1.0 / ls2
    while theta * lam * sigma ** 2 > 1.0:
        theta = math.nextafter(theta, 0.0)
    if not theta > 0.75:
        raise ParameterError(f"lam*sigma^2 = {ls2:.6g} >= 4/3: no admissible theta")
    return theta
