"""Pessimistic and optimistic interval value iteration on an action grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bellman import GridOperator
from .model import IMDPModel

__all__ = [
    "SolveConfig",
    "SolveResult",
    "NonConvergenceError",
    "solve",
    "extract_policy",
    "certify_fixed_point",
]

MODES = ("pessimistic", "optimistic")


@dataclass(frozen=True)
class SolveConfig:
    mode: str = "pessimistic"
    grid: object = 101  # points per action dimension (int or sequence)
    tol: float = 1e-6
    max_iterations: int = 100_000
    v0: Optional[np.ndarray] = None
    backend: Optional[str] = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class SolveResult:
    value: np.ndarray
    policy: np.ndarray
    iterations: int
    residual: float
    certified_error: float
    converged: bool = True
    history: list = field(default_factory=list, repr=False)


class NonConvergenceError(RuntimeError):
    def __init__(self, result: SolveResult, target: float):
        self.result = result
        super().__init__(
            f"no convergence after {result.iterations} iterations: "
            f"residual {result.residual:.3e} > target {target:.3e}"
        )


def _stop_threshold(tol: float, gamma: float) -> float:
    # ||v - V*|| <= gamma/(1-gamma) * ||v - v_prev||
    if gamma == 0.0:
        return np.inf
    return tol * (1.0 - gamma) / gamma


def solve(model: IMDPModel, config: SolveConfig = SolveConfig(), keep_history: bool = False) -> SolveResult:
    """Iterate ``v <- G(v)`` until the contraction bound certifies ``tol``.

    Pass ``model.relaxed()`` to solve the relaxed problem.  Raises
    :class:`NonConvergenceError` (carrying the last iterate) when
    ``max_iterations`` is exhausted first.
    """
    upper = config.mode == "optimistic"
    op = GridOperator(model, config.grid, backend=config.backend)
    gamma = model.gamma
    v = np.zeros(model.n_states) if config.v0 is None else np.asarray(config.v0, dtype=float).copy()
    threshold = _stop_threshold(config.tol, gamma)
    history = [v.copy()] if keep_history else []
    residual = np.inf
    idx = None
    k = 0
    while k < config.max_iterations:
        new, idx = op.g(v, upper)
        residual = float(np.max(np.abs(new - v)))
        v = new
        k += 1
        if keep_history:
            history.append(v.copy())
        if residual <= threshold:
            break
    _, idx = op.g(v, upper)
    certified = residual * gamma / (1.0 - gamma)
    converged = residual <= threshold
    result = SolveResult(v, op.policy(idx), k, residual, certified, converged, history)
    if not converged:
        raise NonConvergenceError(result, threshold)
    return result


def extract_policy(value, model: IMDPModel, mode: str = "pessimistic", grid=101, backend=None) -> np.ndarray:
    """Greedy grid policy for the mode's Bellman-policy objective at ``value``."""
    op = GridOperator(model, grid, backend=backend)
    _, idx = op.g(value, mode == "optimistic")
    return op.policy(idx)


def certify_fixed_point(value, model: IMDPModel, mode: str = "pessimistic", grid=101, backend=None) -> float:
    """Sup-norm residual ``||G(value) - value||`` of the grid operator."""
    op = GridOperator(model, grid, backend=backend)
    new, _ = op.g(value, mode == "optimistic")
    return float(np.max(np.abs(new - np.asarray(value, dtype=float))))
