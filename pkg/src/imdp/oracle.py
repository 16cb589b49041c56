"""Brute-force references used to arbitrate the closed forms.

Nothing here imports the pivot search from :mod:`imdp.bellman`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ActionBox, IMDPModel, tabulate

__all__ = [
    "MAX_ORACLE_STATES",
    "OracleInfeasible",
    "BoxLP",
    "ConcreteMDP",
    "lp_min",
    "lp_max",
    "argmax_grid",
    "sample_member_mdp",
    "member_distribution",
    "mdp_bellman",
    "mdp_policy_operator",
]

MAX_ORACLE_STATES = 12
_TOL = 1e-12


class OracleInfeasible(ValueError):
    pass


@dataclass(frozen=True)
class BoxLP:
    """``min/max objective . p`` s.t. ``lower <= p <= upper`` and ``sum(p) == 1``."""

    objective: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        for name in ("objective", "lower", "upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if not (self.objective.shape == self.lower.shape == self.upper.shape):
            raise ValueError("objective and bounds must have equal length")


_patterns_cache: dict = {}


def _patterns(k: int) -> np.ndarray:
    if k not in _patterns_cache:
        _patterns_cache[k] = np.array(list(itertools.product((0, 1), repeat=k)), dtype=bool).reshape(2**k, k)
    return _patterns_cache[k]


def _vertices(problem: BoxLP) -> np.ndarray:
    """All vertices: every coordinate but one at a bound, the free one closes the budget."""
    lo, hi = problem.lower, problem.upper
    n = lo.shape[0]
    if n > MAX_ORACLE_STATES:
        raise ValueError(f"oracle limited to {MAX_ORACLE_STATES} states, got {n}")
    pats = _patterns(n - 1)
    out = []
    for q in range(n):
        others = np.array([i for i in range(n) if i != q], dtype=int)
        cand = np.empty((pats.shape[0], n))
        cand[:, others] = np.where(pats, hi[others], lo[others])
        cand[:, q] = 1.0 - cand[:, others].sum(axis=1)
        ok = (cand[:, q] >= lo[q] - _TOL) & (cand[:, q] <= hi[q] + _TOL)
        out.append(cand[ok])
    verts = np.vstack(out)
    if verts.shape[0] == 0:
        raise OracleInfeasible("transition polytope is empty")
    return verts


def _solve(problem: BoxLP, sign: float):
    verts = _vertices(problem)
    vals = verts @ problem.objective
    k = int(np.argmin(sign * vals))
    return float(vals[k]), verts[k]


def lp_min(problem: BoxLP):
    """Exact minimum by vertex enumeration; returns ``(value, solution)``."""
    return _solve(problem, 1.0)


def lp_max(problem: BoxLP):
    return _solve(problem, -1.0)


def argmax_grid(objective: Callable, box: ActionBox, resolution):
    """Exhaustive search over the box grid; first maximiser in lexicographic order."""
    pts = box.grid(resolution)
    vals = np.array([float(objective(a)) for a in pts])
    k = int(np.argmax(vals))
    return pts[k], float(vals[k])


@dataclass(frozen=True)
class ConcreteMDP:
    """Finite-action MDP: ``P[s, g, t]`` and ``R[s, g]`` over ``actions[g]``."""

    actions: np.ndarray
    P: np.ndarray
    R: np.ndarray
    gamma: float


def member_distribution(lower, upper, rng: np.random.Generator, mix: int = 3) -> np.ndarray:
    """Random point of the polytope: a convex mix of bottom-up fills in random orders."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = lower.shape[0]
    budget = 1.0 - lower.sum()
    if budget < -_TOL or upper.sum() < 1.0 - _TOL:
        raise OracleInfeasible("bounds admit no distribution")
    verts = []
    for _ in range(mix):
        p = lower.copy()
        rest = max(budget, 0.0)
        for t in rng.permutation(n):
            add = min(upper[t] - lower[t], rest)
            p[t] += add
            rest -= add
        verts.append(p)
    w = rng.dirichlet(np.ones(mix))
    p = w @ np.array(verts)
    # renormalise within bounds: spread rounding residue over slack coordinates
    resid = 1.0 - p.sum()
    slack = (upper - p) if resid > 0 else (p - lower)
    if abs(resid) > 0 and slack.sum() > 0:
        p += resid * slack / slack.sum()
    return np.clip(p, lower, upper)


def sample_member_mdp(model: IMDPModel, seed: int, actions=None, resolution=None) -> ConcreteMDP:
    """A random MDP belonging to the IMDP on a finite action set (deterministic in seed)."""
    if actions is None:
        actions = model.action_box.grid(3 if resolution is None else resolution)
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    tab = tabulate(model, actions)
    rng = np.random.default_rng(seed)
    n, G = model.n_states, actions.shape[0]
    P = np.empty((n, G, n))
    for s in range(n):
        for g in range(G):
            P[s, g] = member_distribution(tab.lower[s, g], tab.upper[s, g], rng)
    u = rng.uniform(size=(n, G))
    R = tab.reward_lower + u * (tab.reward_upper - tab.reward_lower)
    return ConcreteMDP(actions, P, R, model.gamma)


def mdp_policy_operator(v, mdp: ConcreteMDP, action_index) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    idx = np.asarray(action_index, dtype=int)
    rows = np.arange(mdp.R.shape[0])
    return mdp.R[rows, idx] + mdp.gamma * mdp.P[rows, idx] @ v


def mdp_bellman(v, mdp: ConcreteMDP) -> np.ndarray:
    """Classical Bellman operator, maximising over the finite action set."""
    v = np.asarray(v, dtype=float)
    q = mdp.R + mdp.gamma * mdp.P @ v
    return q.max(axis=1)
