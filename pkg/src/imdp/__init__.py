"""Interval MDPs with continuous action spaces.

Pessimistic and optimistic interval value iteration, action-space pessimistic
relaxations and the projected-gradient value-policy scheme.
"""

__version__ = "0.1.0"

from .bellman import GridOperator, f_lower, f_upper, lambda_, omega, order_permutation
from .expr import Expression, evaluate, parse
from .model import IMDPModel, load_model, model_from_dict, validate
from .relax import GradientConfig, estimate_constants, value_policy_iterate
from .solver import SolveConfig, solve

__all__ = [
    "__version__",
    "Expression",
    "parse",
    "evaluate",
    "IMDPModel",
    "load_model",
    "model_from_dict",
    "validate",
    "order_permutation",
    "omega",
    "lambda_",
    "f_lower",
    "f_upper",
    "GridOperator",
    "SolveConfig",
    "solve",
    "GradientConfig",
    "estimate_constants",
    "value_policy_iterate",
]
