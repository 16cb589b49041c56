"""Value-policy iteration on an action-space pessimistic relaxation.

One sweep of the relaxed pessimistic Bellman-policy operator is interleaved
with ``inner_steps`` projected gradient-ascent steps on the policy.  The
module also estimates the regularity constants the error bound needs and
checks that trajectories stay in the invariant box
``0 <= v <= m/(1-gamma)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bellman import f_lower, greedy_bound, omega
from .expr import evaluate
from .model import Constants, IMDPModel, tabulate

__all__ = [
    "GradientConfig",
    "EstimatedConstants",
    "Trajectory",
    "BoundReport",
    "InvarianceReport",
    "relaxed_view",
    "policy_gradient",
    "projected_gradient_step",
    "estimate_constants",
    "error_bound",
    "value_policy_iterate",
    "check_forward_invariance",
]

# c counts as zero when it is this small relative to L
FLAT_CURVATURE = 1e-4


def relaxed_view(model: IMDPModel):
    """``(relaxed model, user constants)``; a model without overlay is taken as already relaxed."""
    if model.relaxation is None:
        return model, Constants()
    return model.relaxed(), model.relaxation.constants


@dataclass(frozen=True)
class GradientConfig:
    beta: Optional[float] = None  # None -> 1/L
    inner_steps: int = 1
    iterations: int = 1000
    pi0: Optional[np.ndarray] = None  # None -> box midpoint in every state
    v0: Optional[np.ndarray] = None  # None -> zeros
    record_every: int = 1

    def __post_init__(self):
        if self.beta is not None and not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.inner_steps < 1 or self.iterations < 1 or self.record_every < 1:
            raise ValueError("inner_steps, iterations and record_every must be >= 1")


@dataclass(frozen=True)
class EstimatedConstants:
    c: float
    L: float
    m_bar: float
    sup_grad: float
    diameter: float
    c_per_state: np.ndarray
    L_per_state: np.ndarray
    flat: bool  # c indistinguishable from zero: strong concavity not observed
    source: dict = field(default_factory=dict)

    def contraction_factor(self) -> float:
        if self.flat or self.c <= 0 or self.L <= 0:
            return 1.0
        return float(min(max(1.0 - self.c / self.L, 0.0), 1.0))

    def to_dict(self) -> dict:
        return {
            "c": self.c,
            "L": self.L,
            "m": self.m_bar,
            "sup_grad": self.sup_grad,
            "diameter": self.diameter,
            "c_flat": self.flat,
            "source": dict(self.source),
        }


@dataclass(frozen=True)
class Trajectory:
    steps: np.ndarray  # iteration index of each record
    values: np.ndarray  # (records, n)
    policies: np.ndarray  # (records, n, m)


@dataclass(frozen=True)
class BoundReport:
    vk: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    epsilon: float
    d0: float
    iterations: int
    constants: EstimatedConstants

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "epsilon": self.epsilon,
            "d0": self.d0,
            "constants": self.constants.to_dict(),
        }


@dataclass
class InvarianceReport:
    applicable: bool
    cap: float
    reason: str = ""
    violations: list = field(default_factory=list)  # (step, kind, state)

    @property
    def ok(self) -> bool:
        return self.applicable and not self.violations


def _state_gradient(v, s, a, model: IMDPModel) -> np.ndarray:
    r = evaluate(model.reward_lower[s], a)
    _, _, g = omega(v, s, a, model)
    return r.gradient + model.gamma * g


def policy_gradient(v, pi, model: IMDPModel) -> np.ndarray:
    """Per-state action gradient of the relaxed pessimistic Bellman-policy operator."""
    v = np.asarray(v, dtype=float)
    pi = np.asarray(pi, dtype=float)
    grads = np.empty_like(pi)
    for s in range(model.n_states):
        grads[s] = _state_gradient(v, s, pi[s], model)
    return grads


def projected_gradient_step(v, pi, beta: float, model: IMDPModel) -> np.ndarray:
    """One ascent step on every state's action, clamped back into the box."""
    pi = np.asarray(pi, dtype=float).reshape(model.n_states, model.action_dim)
    if beta == 0:
        return model.action_box.clamp(pi)
    return model.action_box.clamp(pi + beta * policy_gradient(v, pi, model))


def _value_and_pivot(v, s, a, model: IMDPModel):
    n = model.n_states
    lo = np.array([model.trans_lower[s][t](a) for t in range(n)])
    hi = np.array([model.trans_upper[s][t](a) for t in range(n)])
    cont, vertex, _ = greedy_bound(v, lo, hi)
    return model.reward_lower[s](a) + model.gamma * cont, vertex.pivot


def _sample_values(rng, n, cap, count):
    """Uniform points of [0, cap]^n mixed with random vertices of that cube."""
    half = count // 2
    uni = rng.uniform(0.0, cap, size=(count - half, n))
    corners = cap * rng.integers(0, 2, size=(half, n)).astype(float)
    return np.vstack([uni, corners])


def estimate_constants(model: IMDPModel, samples: int = 2000, seed: int = 0,
                       overrides: Optional[Constants] = None) -> EstimatedConstants:
    """Sample the relaxed objective for ``m``, ``c``, ``L``, the gradient bound and the diameter.

    ``model`` may be a base model with overlay (its declared constants are
    used as overrides) or an already relaxed model.  Explicit ``overrides``
    win over both.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    relaxed, declared = relaxed_view(model)
    given = overrides or declared
    rng = np.random.default_rng(seed)
    box = relaxed.action_box
    n, m, gamma = relaxed.n_states, relaxed.action_dim, relaxed.gamma
    source = {}

    pts = np.vstack([box.corners(), box.midpoint[None, :], box.sample(rng, samples)])
    rewards = tabulate(relaxed, pts).reward_lower
    if given.m is not None:
        m_bar = float(given.m)
        source["m"] = "given"
    else:
        m_bar = max(float(rewards.max()), 0.0)
        source["m"] = "estimated"
    cap = m_bar / (1.0 - gamma)

    side = box.upper - box.lower
    diameter = box.diameter
    h = 1e-3 * diameter
    free = side > 2 * h
    vs = _sample_values(rng, n, cap, samples)
    c_s = np.full(n, np.inf)
    L_s = np.zeros(n)
    sup_grad = 0.0
    for i in range(samples):
        v = vs[i]
        s = i % n
        a = box.lower + rng.uniform(size=m) * side
        g = _state_gradient(v, s, a, relaxed)
        sup_grad = max(sup_grad, float(np.abs(g).sum()))
        if not free.any():
            continue
        u = rng.normal(size=m) * free
        u /= np.linalg.norm(u)
        a = np.where(free, np.clip(a, box.lower + h, box.upper - h), a)
        f0, j0 = _value_and_pivot(v, s, a, relaxed)
        fp, jp = _value_and_pivot(v, s, a + h * u, relaxed)
        fm, jm = _value_and_pivot(v, s, a - h * u, relaxed)
        if not (j0 == jp == jm):
            continue  # kink between the probes
        kappa = -(fp - 2.0 * f0 + fm) / (h * h)
        c_s[s] = min(c_s[s], kappa)
        L_s[s] = max(L_s[s], abs(kappa))
    c_s = np.where(np.isfinite(c_s), c_s, 0.0)

    c = float(c_s.min())
    L = float(L_s.max())
    source["c"] = source["L"] = "estimated"
    if given.c is not None:
        c, source["c"] = float(given.c), "given"
    if given.L is not None:
        L, source["L"] = float(given.L), "given"
    flat = c <= FLAT_CURVATURE * L or c <= 0
    return EstimatedConstants(c, L, m_bar, sup_grad, diameter, c_s, L_s, flat, source)


def error_bound(vk, k: int, gamma: float, constants: EstimatedConstants, inner_steps: int, v0=None) -> BoundReport:
    """Two-sided enclosure of the relaxed pessimistic value after ``k`` iterations."""
    vk = np.asarray(vk, dtype=float)
    cap = constants.m_bar / (1.0 - gamma)
    v0 = np.zeros_like(vk) if v0 is None else np.asarray(v0, dtype=float)
    # the optimum lies in [0, cap]^n, so this bounds ||v0 - V*||
    d0 = float(np.max(np.maximum(np.abs(v0), np.abs(cap - v0))))
    eps = constants.sup_grad * constants.contraction_factor() ** inner_steps * constants.diameter
    gk = gamma ** k
    width = gk * d0 + (1.0 - gk) * eps / (1.0 - gamma)
    return BoundReport(vk.copy(), vk.copy(), vk + width, float(eps), d0, k, constants)


def value_policy_iterate(model: IMDPModel, config: GradientConfig = GradientConfig(),
                         constants: Optional[EstimatedConstants] = None,
                         samples: int = 2000, seed: int = 0):
    """Run the interleaved value/projected-gradient scheme.

    Returns ``(trajectory, bound_report)``.  Constants are estimated (with the
    overlay's declared values taking precedence) unless passed in.
    """
    relaxed, _ = relaxed_view(model)
    if constants is None:
        constants = estimate_constants(model, samples=samples, seed=seed)
    if constants.flat:
        warnings.warn("strong concavity not observed (c ~ 0); error bound uses contraction factor 1",
                      RuntimeWarning, stacklevel=2)
    beta = config.beta
    if beta is None:
        if not constants.L > 0:
            raise ValueError("L is zero; give an explicit beta")
        beta = 1.0 / constants.L
    n, m = relaxed.n_states, relaxed.action_dim
    box = relaxed.action_box
    v = np.zeros(n) if config.v0 is None else np.asarray(config.v0, dtype=float).copy()
    if config.pi0 is None:
        pi = np.tile(box.midpoint, (n, 1))
    else:
        pi = np.asarray(config.pi0, dtype=float).reshape(n, m).copy()
        if not all(box.contains(p) for p in pi):
            raise ValueError("pi0 must lie in the relaxed action box")
    v_init = v.copy()

    steps, values, policies = [0], [v.copy()], [pi.copy()]
    for k in range(1, config.iterations + 1):
        v = f_lower(v, pi, relaxed)
        for _ in range(config.inner_steps):
            pi = projected_gradient_step(v, pi, beta, relaxed)
        if k % config.record_every == 0 or k == config.iterations:
            steps.append(k)
            values.append(v.copy())
            policies.append(pi.copy())
    traj = Trajectory(np.array(steps), np.array(values), np.array(policies))
    report = error_bound(v, config.iterations, relaxed.gamma, constants, config.inner_steps, v_init)
    return traj, report


def check_forward_invariance(trajectory: Trajectory, model: IMDPModel, m_bar: float,
                             samples: int = 256, seed: int = 0, tol: float = 1e-9) -> InvarianceReport:
    """Check ``0 <= v^k <= m/(1-gamma)`` and ``pi^k`` in the relaxed box along a trajectory."""
    relaxed, _ = relaxed_view(model)
    cap = m_bar / (1.0 - relaxed.gamma)
    box = relaxed.action_box
    rng = np.random.default_rng(seed)
    pts = np.vstack([box.corners(), box.sample(rng, samples)])
    if tabulate(relaxed, pts).reward_lower.min() < 0:
        return InvarianceReport(False, cap, "not applicable: negative rewards")
    report = InvarianceReport(True, cap)
    for step, v, pi in zip(trajectory.steps, trajectory.values, trajectory.policies):
        for s in np.flatnonzero(v < -tol):
            report.violations.append((int(step), "value below zero", relaxed.states[s]))
        for s in np.flatnonzero(v > cap + tol):
            report.violations.append((int(step), "value above cap", relaxed.states[s]))
        for s in range(relaxed.n_states):
            if not box.contains(pi[s], tol):
                report.violations.append((int(step), "action outside box", relaxed.states[s]))
    return report
