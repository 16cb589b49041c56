"""Interval Bellman operators via closed-form O-maximisation.

Indices are 0-based throughout: the pivot ``j`` returned by :func:`iota_lower`
is a position in the descending order of ``v``, and ``order[j]`` is the state
that receives the residual probability mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import FEAS_TOL
from .expr import evaluate
from .model import IMDPModel, tabulate

__all__ = [
    "InfeasibleError",
    "GreedyVertex",
    "order_permutation",
    "iota_lower",
    "iota_upper",
    "greedy_bound",
    "omega",
    "lambda_",
    "f_lower",
    "f_upper",
    "g_lower_grid",
    "g_upper_grid",
    "GridOperator",
]


class InfeasibleError(ValueError):
    """No pivot satisfies the residual-mass sandwich (bounds are inconsistent)."""


@dataclass(frozen=True)
class GreedyVertex:
    probabilities: np.ndarray
    pivot: int  # position in the order
    order: np.ndarray

    @property
    def pivot_state(self) -> int:
        return int(self.order[self.pivot])


def order_permutation(v) -> np.ndarray:
    """States sorted by descending value, ties by ascending state index."""
    v = np.asarray(v, dtype=float)
    return np.argsort(-v, kind="stable")


def _iota(order, first, second, lower, upper, tol=FEAS_TOL) -> int:
    n = len(order)
    fo = first[order]
    so = second[order]
    for j in range(n - 1, -1, -1):
        xi = 1.0 - fo[:j].sum() - so[j + 1:].sum()
        t = order[j]
        if lower[t] - tol <= xi <= upper[t] + tol:
            return j
    raise InfeasibleError(
        f"no pivot is feasible (sum lower={lower.sum():.17g}, sum upper={upper.sum():.17g})"
    )


def iota_lower(v, lower, upper) -> int:
    """Largest feasible pivot position for the minimising vertex."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return _iota(order_permutation(v), lower, upper, lower, upper)


def iota_upper(v, lower, upper) -> int:
    """Largest feasible pivot position for the maximising vertex."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return _iota(order_permutation(v), upper, lower, lower, upper)


def greedy_bound(v, lower, upper, maximize=False, lower_grad=None, upper_grad=None):
    """Optimum of ``p . v`` over the transition polytope defined by the bounds.

    Returns ``(value, vertex, grad)``; ``grad`` is the derivative with respect to
    the action when bound gradients (shape ``(n, m)``) are given, holding the
    order and pivot fixed, else None.
    """
    v = np.asarray(v, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    order = order_permutation(v)
    first, second = (upper, lower) if maximize else (lower, upper)
    j = _iota(order, first, second, lower, upper)
    vo = v[order]
    vj = vo[j]
    head, tail = order[:j], order[j + 1:]
    value = float(np.dot(vo[:j] - vj, first[head]) + np.dot(vo[j + 1:] - vj, second[tail]) + vj)

    p = np.empty_like(v)
    p[head] = first[head]
    p[tail] = second[tail]
    p[order[j]] = 1.0 - first[head].sum() - second[tail].sum()
    vertex = GreedyVertex(p, j, order)

    grad = None
    if lower_grad is not None and upper_grad is not None:
        gf, gs = (upper_grad, lower_grad) if maximize else (lower_grad, upper_grad)
        gf = np.asarray(gf, dtype=float)
        gs = np.asarray(gs, dtype=float)
        grad = (vo[:j] - vj) @ gf[head] + (vo[j + 1:] - vj) @ gs[tail]
        grad = np.asarray(grad, dtype=float).reshape(gf.shape[1])
    return value, vertex, grad


def _bounds_at(model: IMDPModel, s: int, a, gradient: bool):
    n, m = model.n_states, model.action_dim
    lo = np.empty(n)
    hi = np.empty(n)
    glo = np.zeros((n, m))
    ghi = np.zeros((n, m))
    for t in range(n):
        for e, vals, grads in ((model.trans_lower[s][t], lo, glo), (model.trans_upper[s][t], hi, ghi)):
            if e.is_constant:
                vals[t] = e(a)
            else:
                r = evaluate(e, a, gradient=gradient)
                vals[t] = r.value
                grads[t] = r.gradient
    return lo, hi, glo, ghi


def omega(v, s: int, a, model: IMDPModel):
    """Pessimistic expected next value at ``(s, a)`` with vertex and action gradient."""
    lo, hi, glo, ghi = _bounds_at(model, s, a, True)
    return greedy_bound(v, lo, hi, False, glo, ghi)


def lambda_(v, s: int, a, model: IMDPModel):
    """Optimistic counterpart of :func:`omega`."""
    lo, hi, glo, ghi = _bounds_at(model, s, a, True)
    return greedy_bound(v, lo, hi, True, glo, ghi)


def _check_policy(model: IMDPModel, pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float).reshape(model.n_states, model.action_dim)
    for s in range(model.n_states):
        if not model.action_box.contains(pi[s], tol=1e-12):
            raise ValueError(f"policy action for state {model.states[s]!r} lies outside the action box")
    return pi


def _f(v, pi, model: IMDPModel, upper: bool) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    pi = _check_policy(model, pi)
    out = np.empty(model.n_states)
    rewards = model.reward_upper if upper else model.reward_lower
    for s in range(model.n_states):
        lo, hi, _, _ = _bounds_at(model, s, pi[s], False)
        cont, _, _ = greedy_bound(v, lo, hi, upper)
        out[s] = rewards[s](pi[s]) + model.gamma * cont
    return out


def f_lower(v, pi, model: IMDPModel) -> np.ndarray:
    """Pessimistic Bellman-policy operator: lower reward plus discounted minimum."""
    return _f(v, pi, model, False)


def f_upper(v, pi, model: IMDPModel) -> np.ndarray:
    return _f(v, pi, model, True)


class GridOperator:
    """Interval Bellman operators with the max over actions taken on a grid.

    The model is tabulated once; each application costs one kernel call over
    the ``(states, grid points)`` table.
    """

    def __init__(self, model: IMDPModel, resolution=None, actions=None, backend=None):
        if actions is None:
            if resolution is None:
                raise ValueError("give a grid resolution or explicit actions")
            actions = model.action_box.grid(resolution)
        self.model = model
        self.gamma = model.gamma
        self.actions = np.atleast_2d(np.asarray(actions, dtype=float))
        self.table = tabulate(model, self.actions)
        self.backend = backend

    @property
    def n_actions(self) -> int:
        return self.actions.shape[0]

    def continuation(self, v, upper: bool = False) -> np.ndarray:
        """Table ``(S, G)`` of the min (or max) expected next value."""
        v = np.asarray(v, dtype=float)
        order = order_permutation(v)
        vals, piv = _kernels.greedy_table(v, order, self.table.lower, self.table.upper, upper, self.backend)
        if np.any(piv < 0):
            s, g = map(int, np.argwhere(piv < 0)[0])
            raise InfeasibleError(
                f"inconsistent transition bounds for state {self.model.states[s]!r} "
                f"at action {self.actions[g].tolist()}"
            )
        return vals

    def q_values(self, v, upper: bool = False) -> np.ndarray:
        rewards = self.table.reward_upper if upper else self.table.reward_lower
        return rewards + self.gamma * self.continuation(v, upper)

    def f(self, v, action_index, upper: bool = False) -> np.ndarray:
        """Bellman-policy operator for a policy given as grid indices per state."""
        q = self.q_values(v, upper)
        idx = np.asarray(action_index, dtype=int)
        return q[np.arange(q.shape[0]), idx]

    def g(self, v, upper: bool = False):
        """Returns ``(values, argmax grid indices)``; ties go to the first grid point."""
        q = self.q_values(v, upper)
        idx = np.argmax(q, axis=1)
        return q[np.arange(q.shape[0]), idx], idx

    def policy(self, action_index) -> np.ndarray:
        return self.actions[np.asarray(action_index, dtype=int)]


def g_lower_grid(v, model: IMDPModel, grid):
    op = GridOperator(model, grid)
    values, idx = op.g(v, upper=False)
    return values, op.policy(idx)


def g_upper_grid(v, model: IMDPModel, grid):
    op = GridOperator(model, grid)
    values, idx = op.g(v, upper=True)
    return values, op.policy(idx)
