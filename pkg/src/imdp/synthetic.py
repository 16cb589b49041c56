"""Random model documents that are consistent by construction.

Transition bounds wrap a nominal distribution ``p``::

    lower = p * (1 - alpha(t)),   upper = p + (1 - p) * beta(t)

with ``alpha, beta`` affine in the normalised action ``t`` in ``[0, 1]^m`` and
valued in ``[0, 1]``, so ``sum(lower) <= 1 <= sum(upper)`` everywhere.  When
``relaxed=True`` the above are the relaxation bounds (affine, hence concave and
convex) and the base model tightens them by a nonnegative bump, while the base
lower reward sits below a concave quadratic relaxation reward.
"""

from __future__ import annotations

import numpy as np

from .model import IMDPModel, model_from_dict

__all__ = ["random_model_dict", "random_model", "example1_dict"]


def _fmt(x: float) -> str:
    return repr(float(x))


def _affine(coefs, const, t_terms):
    parts = [_fmt(const)]
    for c, t in zip(coefs, t_terms):
        parts.append(f"{_fmt(c)}*{t}")
    return "(" + " + ".join(parts) + ")"


def random_model_dict(n: int, m: int = 1, seed: int = 0, gamma=None, relaxed: bool = False,
                      enlarge: float = 0.0, density: float = 1.0, nonnegative: bool = True) -> dict:
    rng = np.random.default_rng(seed)
    states = [f"s{i}" for i in range(n)]
    lo_box = np.zeros(m)
    hi_box = np.ones(m)
    cv_lo = lo_box - enlarge
    cv_hi = hi_box + enlarge
    # normalised coordinate over the relaxed box so every bound stays valid there
    span = cv_hi - cv_lo
    t_terms = [f"((a{k + 1} - {_fmt(cv_lo[k])}) / {_fmt(span[k])})" for k in range(m)]
    bump = " + ".join(f"({t} * (1.0 - {t}))" for t in t_terms)
    bump = f"(({bump}) / {_fmt(m)})"  # in [0, 1/4] on the relaxed box
    gamma = float(rng.uniform(0.5, 0.95)) if gamma is None else float(gamma)

    transitions, cv_transitions = [], []
    for s in range(n):
        mask = rng.uniform(size=n) < density
        mask[rng.integers(n)] = True
        p = rng.dirichlet(np.ones(int(mask.sum())))
        nominal = np.zeros(n)
        nominal[mask] = p
        for t in np.flatnonzero(mask):
            w = rng.dirichlet(np.ones(m + 2))[: m + 1]  # const + slopes, total < 1
            z = rng.dirichlet(np.ones(m + 2))[: m + 1]
            alpha = _affine(w[1:], w[0], t_terms)
            beta = _affine(z[1:], z[0], t_terms)
            pt = _fmt(nominal[t])
            lower = f"{pt} * (1.0 - {alpha})"
            upper = f"{pt} + (1.0 - {pt}) * {beta}"
            entry = {"from": states[s], "to": states[t]}
            if relaxed:
                e = _fmt(rng.uniform(0.0, 1.0))
                cv_transitions.append({**entry, "lower": lower, "upper": upper})
                transitions.append({
                    **entry,
                    "lower": f"({lower}) * (1.0 - {e} * {bump})",
                    "upper": f"({upper}) + (1.0 - ({upper})) * {e} * {bump}",
                })
            else:
                transitions.append({**entry, "lower": lower, "upper": upper})

    rewards, cv_rewards = [], []
    for s in range(n):
        base = rng.uniform(0.5, 2.0) if nonnegative else rng.uniform(-2.0, 2.0)
        lin = rng.uniform(-1.0, 1.0, size=m)
        curv = rng.uniform(0.2, 2.0, size=m)
        quad = " + ".join(f"{_fmt(lin[k])}*a{k + 1} - {_fmt(curv[k])}*a{k + 1}^2" for k in range(m))
        r_cv = f"{_fmt(base + 1.5 * m + 2.0 * curv.sum())} + {quad}"
        spread = _fmt(rng.uniform(0.0, 1.0))
        if relaxed:
            dip = _fmt(rng.uniform(0.0, 1.0))
            r_lo = f"{r_cv} - {dip} * {bump} * (1.0 + {bump})"
            cv_rewards.append({"state": states[s], "lower": r_cv})
        else:
            r_lo = r_cv
        rewards.append({"state": states[s], "lower": r_lo, "upper": f"{r_cv} + {spread}"})

    doc = {
        "states": states,
        "action_dim": m,
        "action_space": {"lower": lo_box.tolist(), "upper": hi_box.tolist()},
        "gamma": gamma,
        "transitions": transitions,
        "rewards": rewards,
    }
    if relaxed:
        doc["relaxation"] = {
            "action_space": {"lower": cv_lo.tolist(), "upper": cv_hi.tolist()},
            "transitions": cv_transitions,
            "rewards": cv_rewards,
        }
    return doc


def random_model(n: int, m: int = 1, seed: int = 0, **kw) -> IMDPModel:
    return model_from_dict(random_model_dict(n, m, seed, **kw))


def example1_dict() -> dict:
    """The two-state, one-dimensional example with its concave relaxation.

    Only lower rewards are specified for this example; the upper reward is
    set equal to the lower one.
    """
    states = ["1", "2"]
    transitions = [
        {"from": s, "to": t, "lower": "0.5*a1", "upper": "0.7 + 0.3*a1"}
        for s in states for t in states
    ]
    r1 = "1 + 4*a1*sqrt(a1) - a1^3"
    r2 = "5 - a1*sqrt(a1)"
    return {
        "states": states,
        "action_dim": 1,
        "action_space": {"lower": [0.0], "upper": [1.0]},
        "gamma": 0.9,
        "transitions": transitions,
        "rewards": [
            {"state": "1", "lower": r1, "upper": r1},
            {"state": "2", "lower": r2, "upper": r2},
        ],
        "relaxation": {
            "action_space": {"lower": [0.0], "upper": [1.0]},
            "rewards": [
                {"state": "1", "lower": "1 + 4*a1 - a1^4"},
                {"state": "2", "lower": "5 - a1^2"},
            ],
        },
    }
