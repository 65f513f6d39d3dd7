"""Primal-dual splitting for ``min f(x) + g(x) + h(Ax)`` under relaxed stepsize conditions."""

from .operators import LinearMap, dense, difference_matrix, diagonal, estimate_spectral_norm, identity
from .functions import conjugate_prox, l1_prox, quadratic_loss_oracle, squared_distance
from .stepsizes import ConditionVerdict, StepsizeConfig, check_classic, check_relaxed, gamma, max_lambda
from .solvers import SolverState, StoppingRule, map_states, solve
from .problems import InstanceRecipe, ProblemSpec, gen_fused_lasso, gen_lasso, objective, reference_solve
from .tightness import eigen_magnitudes, empirical_divergence_check, necessary_condition

__version__ = "0.1.0"
