"""IMDP data model: states, box action space, interval transitions and rewards.

Transition grids are stored row-major by source state: ``trans_lower[s][t]`` is
the lower bound on the probability of moving from ``s`` to ``t``.  Value
vectors and policies are plain numpy arrays of shape ``(n,)`` and ``(n, m)``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .expr import Expression, ExpressionError, ParseError, evaluate_batch, parse

__all__ = [
    "ModelError",
    "ActionBox",
    "Constants",
    "RelaxationOverlay",
    "IMDPModel",
    "ModelTable",
    "Violation",
    "ValidationReport",
    "load_model",
    "model_from_dict",
    "model_digest",
    "tabulate",
    "validate",
]

POINT_TOL = 1e-12
CURVATURE_TOL = 1e-9


class ModelError(ValueError):
    """Schema or structural problem in a model; ``path`` names the field."""

    def __init__(self, message: str, path: str = ""):
        self.message = message
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class ActionBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ModelError("lower and upper differ in length", "action_space")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ModelError("bounds must be finite", "action_space")
        if np.any(lo > hi):
            raise ModelError("lower exceeds upper", "action_space")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def diameter(self) -> float:
        """Largest sup-norm distance between two points of the box."""
        return float(np.max(self.upper - self.lower))

    def clamp(self, a):
        return np.clip(a, self.lower, self.upper)

    def contains(self, a, tol: float = 0.0) -> bool:
        a = np.asarray(a, dtype=float)
        return bool(np.all(a >= self.lower - tol) and np.all(a <= self.upper + tol))

    def includes(self, other: "ActionBox") -> bool:
        return bool(np.all(self.lower <= other.lower) and np.all(other.upper <= self.upper))

    def grid(self, resolution) -> np.ndarray:
        """Cartesian grid in lexicographic order (first coordinate slowest).

        ``resolution`` is an int or one int per dimension; a collapsed
        dimension (lower == upper) always contributes a single point.
        """
        res = np.broadcast_to(np.asarray(resolution, dtype=int), (self.dim,))
        axes = []
        for lo, hi, r in zip(self.lower, self.upper, res):
            if lo == hi:
                axes.append(np.array([lo]))
            elif r < 2:
                raise ValueError("grid needs at least 2 points per non-collapsed dimension")
            else:
                axes.append(np.linspace(lo, hi, int(r)))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in mesh], axis=1)

    def corners(self, limit: int = 256) -> np.ndarray:
        if 2 ** self.dim > limit:
            return np.empty((0, self.dim))
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.dim))


@dataclass(frozen=True)
class Constants:
    """User-supplied regularity constants for the relaxed model (any may be None)."""

    c: Optional[float] = None
    L: Optional[float] = None
    m: Optional[float] = None


@dataclass(frozen=True)
class RelaxationOverlay:
    action_box: ActionBox
    trans_lower: tuple
    trans_upper: tuple
    reward_lower: tuple
    constants: Constants = field(default_factory=Constants)


@dataclass(frozen=True)
class IMDPModel:
    states: tuple
    action_box: ActionBox
    gamma: float
    trans_lower: tuple  # [s][t] -> Expression
    trans_upper: tuple
    reward_lower: tuple  # [s] -> Expression
    reward_upper: tuple
    relaxation: Optional[RelaxationOverlay] = None

    def __post_init__(self):
        n = len(self.states)
        if n == 0:
            raise ModelError("at least one state is required", "states")
        if len(set(self.states)) != n:
            raise ModelError("state names must be unique", "states")
        if not 0.0 <= self.gamma < 1.0:
            raise ModelError("gamma out of range", "gamma")
        for name in ("trans_lower", "trans_upper"):
            grid = getattr(self, name)
            if len(grid) != n or any(len(row) != n for row in grid):
                raise ModelError(f"must be {n}x{n}", name)
        for name in ("reward_lower", "reward_upper"):
            if len(getattr(self, name)) != n:
                raise ModelError(f"must have {n} entries", name)
        m = self.action_dim
        for e in self._expressions():
            if e.action_dim != m:
                raise ModelError("expression action dimension mismatch")
        ov = self.relaxation
        if ov is not None:
            if ov.action_box.dim != m:
                raise ModelError("dimension mismatch", "relaxation.action_space")
            if not ov.action_box.includes(self.action_box):
                raise ModelError("must contain the base action space", "relaxation.action_space")
            k = ov.constants
            if k.c is not None and k.L is not None and not 0 < k.c <= k.L:
                raise ModelError("need 0 < c <= L", "relaxation.constants")
            if k.L is not None and k.L <= 0:
                raise ModelError("L must be positive", "relaxation.constants")

    def _expressions(self):
        for row in self.trans_lower + self.trans_upper:
            yield from row
        yield from self.reward_lower
        yield from self.reward_upper
        if self.relaxation is not None:
            for row in self.relaxation.trans_lower + self.relaxation.trans_upper:
                yield from row
            yield from self.relaxation.reward_lower

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def action_dim(self) -> int:
        return self.action_box.dim

    def relaxed(self) -> "IMDPModel":
        """The relaxed IMDP (overlay box, transitions and lower rewards).

        Upper rewards are carried over from the base model; only the
        pessimistic side is meaningful for a relaxation.
        """
        ov = self.relaxation
        if ov is None:
            raise ModelError("model has no relaxation overlay", "relaxation")
        return IMDPModel(
            states=self.states,
            action_box=ov.action_box,
            gamma=self.gamma,
            trans_lower=ov.trans_lower,
            trans_upper=ov.trans_upper,
            reward_lower=ov.reward_lower,
            reward_upper=self.reward_upper,
        )

    def with_gamma(self, gamma: float) -> "IMDPModel":
        return replace(self, gamma=float(gamma))


# -- loading ------------------------------------------------------------------


def _require(obj, key, path, kind=None):
    if not isinstance(obj, dict) or key not in obj:
        raise ModelError("missing field", f"{path}.{key}" if path else key)
    val = obj[key]
    if kind is not None and not isinstance(val, kind):
        raise ModelError(f"'{key}' has wrong type", f"{path}.{key}" if path else key)
    return val


def _number(val, path):
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ModelError("expected a number", path)
    return float(val)


def _expr(text, m, path):
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ModelError("expected an expression string", path)
    try:
        return parse(text, m)
    except ParseError as err:
        raise ModelError(f"{err.message} at position {err.position} in {text!r}", path) from err


def _box(obj, m, path):
    lo = _require(obj, "lower", path, list)
    hi = _require(obj, "upper", path, list)
    if len(lo) != m or len(hi) != m:
        raise ModelError(f"bounds must have length action_dim={m}", path)
    lo = [_number(x, f"{path}.lower[{i}]") for i, x in enumerate(lo)]
    hi = [_number(x, f"{path}.upper[{i}]") for i, x in enumerate(hi)]
    try:
        return ActionBox(np.array(lo), np.array(hi))
    except ModelError as err:
        raise ModelError(err.message, path) from None


def _transitions(entries, index, m, path, zero):
    n = len(index)
    lower = [[zero] * n for _ in range(n)]
    upper = [[zero] * n for _ in range(n)]
    seen = set()
    if not isinstance(entries, list):
        raise ModelError("expected an array", path)
    for k, entry in enumerate(entries):
        p = f"{path}[{k}]"
        src = _require(entry, "from", p)
        dst = _require(entry, "to", p)
        for role, name in (("from", src), ("to", dst)):
            if name not in index:
                raise ModelError(f"unknown state {name!r}", f"{p}.{role}")
        key = (index[src], index[dst])
        if key in seen:
            raise ModelError(f"duplicate transition {src!r}->{dst!r}", p)
        seen.add(key)
        lower[key[0]][key[1]] = _expr(_require(entry, "lower", p), m, f"{p}.lower")
        upper[key[0]][key[1]] = _expr(_require(entry, "upper", p), m, f"{p}.upper")
    return tuple(map(tuple, lower)), tuple(map(tuple, upper))


def _rewards(entries, index, m, path, keys):
    if not isinstance(entries, list):
        raise ModelError("expected an array", path)
    out = {key: [None] * len(index) for key in keys}
    for k, entry in enumerate(entries):
        p = f"{path}[{k}]"
        name = _require(entry, "state", p)
        if name not in index:
            raise ModelError(f"unknown state {name!r}", f"{p}.state")
        s = index[name]
        if out[keys[0]][s] is not None:
            raise ModelError(f"duplicate reward for {name!r}", p)
        for key in keys:
            out[key][s] = _expr(_require(entry, key, p), m, f"{p}.{key}")
    for key in keys:
        missing = [st for st, e in zip(index, out[key]) if e is None]
        if missing:
            raise ModelError(f"no reward for state {missing[0]!r}", path)
    return [tuple(out[key]) for key in keys]


def model_from_dict(data: dict) -> IMDPModel:
    """Build a model from the decoded JSON document."""
    if not isinstance(data, dict):
        raise ModelError("top level must be an object")
    states = _require(data, "states", "", list)
    if not states or not all(isinstance(s, str) for s in states):
        raise ModelError("expected a non-empty array of strings", "states")
    if len(set(states)) != len(states):
        raise ModelError("state names must be unique", "states")
    index = {s: i for i, s in enumerate(states)}
    m = _require(data, "action_dim", "")
    if isinstance(m, bool) or not isinstance(m, int) or m < 1:
        raise ModelError("must be a positive integer", "action_dim")
    box = _box(_require(data, "action_space", "", dict), m, "action_space")
    gamma = _number(_require(data, "gamma", ""), "gamma")
    if not 0.0 < gamma < 1.0:
        raise ModelError("gamma out of range", "gamma")
    zero = Expression.constant(0.0, m)
    t_lo, t_hi = _transitions(_require(data, "transitions", ""), index, m, "transitions", zero)
    r_lo, r_hi = _rewards(_require(data, "rewards", ""), index, m, "rewards", ("lower", "upper"))

    overlay = None
    if "relaxation" in data and data["relaxation"] is not None:
        rel = data["relaxation"]
        if not isinstance(rel, dict):
            raise ModelError("expected an object", "relaxation")
        cv_box = _box(rel["action_space"], m, "relaxation.action_space") if "action_space" in rel else box
        if "transitions" in rel:
            cv_lo, cv_hi = _transitions(rel["transitions"], index, m, "relaxation.transitions", zero)
        else:
            cv_lo, cv_hi = t_lo, t_hi
        if "rewards" in rel:
            (cv_r,) = _rewards(rel["rewards"], index, m, "relaxation.rewards", ("lower",))
        else:
            cv_r = r_lo
        consts = rel.get("constants") or {}
        if not isinstance(consts, dict):
            raise ModelError("expected an object", "relaxation.constants")
        unknown = set(consts) - {"c", "L", "m"}
        if unknown:
            raise ModelError(f"unknown constant {sorted(unknown)[0]!r}", "relaxation.constants")
        k = {key: (None if consts.get(key) is None else _number(consts[key], f"relaxation.constants.{key}"))
             for key in ("c", "L", "m")}
        overlay = RelaxationOverlay(cv_box, cv_lo, cv_hi, cv_r, Constants(**k))

    return IMDPModel(tuple(states), box, gamma, t_lo, t_hi, r_lo, r_hi, overlay)


def load_model(path) -> IMDPModel:
    """Read and structurally check a model file.  Raises OSError or ModelError."""
    raw = Path(path).read_bytes()
    try:
        data = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ModelError(f"invalid JSON: {err}") from err
    return model_from_dict(data)


def model_digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -- tabulation ---------------------------------------------------------------


@dataclass(frozen=True)
class ModelTable:
    """Model data evaluated on a fixed list of actions.

    ``lower``/``upper`` have shape ``(n, G, n)`` indexed ``[s, g, t]``;
    rewards have shape ``(n, G)``.
    """

    actions: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    reward_lower: np.ndarray
    reward_upper: np.ndarray


def _batch(e: Expression, actions: np.ndarray) -> np.ndarray:
    if e.is_constant:
        return np.full(actions.shape[0], e(np.zeros(e.action_dim)))
    return evaluate_batch(e, actions)


def tabulate(model: IMDPModel, actions, rewards: bool = True) -> ModelTable:
    actions = np.atleast_2d(np.asarray(actions, dtype=float))
    n, G = model.n_states, actions.shape[0]
    lo = np.empty((n, G, n))
    hi = np.empty((n, G, n))
    for s in range(n):
        for t in range(n):
            lo[s, :, t] = _batch(model.trans_lower[s][t], actions)
            hi[s, :, t] = _batch(model.trans_upper[s][t], actions)
    r_lo = np.empty((n, G))
    r_hi = np.empty((n, G))
    if rewards:
        for s in range(n):
            r_lo[s] = _batch(model.reward_lower[s], actions)
            r_hi[s] = _batch(model.reward_upper[s], actions)
    return ModelTable(actions, lo, hi, r_lo, r_hi)


# -- validation ---------------------------------------------------------------


@dataclass
class Violation:
    check: str
    detail: str
    state: Optional[str] = None
    successor: Optional[str] = None
    witness: Optional[list] = None  # one action, or a pair for curvature checks
    count: int = 1

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "detail": self.detail,
            "state": self.state,
            "successor": self.successor,
            "witness": self.witness,
            "count": self.count,
        }


@dataclass
class ValidationReport:
    samples: int
    seed: int
    violations: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def by_check(self, check: str) -> list:
        return [v for v in self.violations if v.check == check]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "samples": self.samples,
            "seed": self.seed,
            "checks": list(self.checks),
            "violations": [v.to_dict() for v in self.violations],
        }


class _Collector:
    def __init__(self, report, states):
        self.report = report
        self.states = states
        self.index = {}

    def flag(self, check, mask, points, detail, s=None, t=None, pair=None):
        """Record the first sample in ``mask`` as witness, counting all hits."""
        hits = np.flatnonzero(mask)
        if hits.size == 0:
            return
        i = int(hits[0])
        if pair is None:
            witness = [points[i].tolist()]
        else:
            witness = [points[i].tolist(), pair[i].tolist()]
        key = (check, s, t, detail)
        if key in self.index:
            self.index[key].count += int(hits.size)
            return
        v = Violation(
            check,
            detail,
            None if s is None else self.states[s],
            None if t is None else self.states[t],
            witness,
            int(hits.size),
        )
        self.index[key] = v
        self.report.violations.append(v)


def _sample_points(box: ActionBox, rng, samples: int) -> np.ndarray:
    return np.vstack([box.corners(), box.midpoint[None, :], box.sample(rng, samples)])


def _interval_checks(col, model: IMDPModel, pts, prefix=""):
    tab = tabulate(model, pts)
    n = model.n_states
    lo, hi = tab.lower, tab.upper
    for s in range(n):
        for t in range(n):
            col.flag(prefix + "interval_ordering", lo[s, :, t] < -POINT_TOL, pts, "lower bound negative", s, t)
            col.flag(prefix + "interval_ordering", lo[s, :, t] > hi[s, :, t] + POINT_TOL, pts, "lower exceeds upper", s, t)
            col.flag(prefix + "interval_ordering", hi[s, :, t] > 1 + POINT_TOL, pts, "upper bound exceeds one", s, t)
        col.flag(prefix + "row_sum", lo[s].sum(axis=1) > 1 + POINT_TOL, pts, "sum of lower bounds exceeds one", s)
        col.flag(prefix + "row_sum", hi[s].sum(axis=1) < 1 - POINT_TOL, pts, "sum of upper bounds below one", s)
    return tab


def validate(model: IMDPModel, samples: int = 1000, seed: int = 0) -> ValidationReport:
    """Sampling-based check of the pointwise and curvature conditions.

    Every violated condition is reported once with its first witness and the
    number of failing samples.  Identical ``seed`` gives an identical report.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    report = ValidationReport(samples, seed)
    col = _Collector(report, model.states)
    n = model.n_states

    pts = _sample_points(model.action_box, rng, samples)
    try:
        tab = _interval_checks(col, model, pts)
    except ExpressionError as err:
        report.violations.append(Violation("evaluation", str(err)))
        return report
    report.checks += ["interval_ordering", "row_sum", "reward_ordering"]
    for s in range(n):
        col.flag("reward_ordering", tab.reward_lower[s] > tab.reward_upper[s] + POINT_TOL, pts,
                 "lower reward exceeds upper reward", s)

    ov = model.relaxation
    if ov is None:
        return report

    report.checks += ["overlay_box", "overlay_dominance", "relaxed_interval_ordering",
                      "relaxed_row_sum", "concavity", "convexity"]
    if not ov.action_box.includes(model.action_box):
        report.violations.append(Violation("overlay_box", "relaxed action box does not contain the base box"))
    relaxed = model.relaxed()
    try:
        cv = tabulate(relaxed, pts)
        for s in range(n):
            for t in range(n):
                col.flag("overlay_dominance", tab.lower[s, :, t] > cv.lower[s, :, t] + POINT_TOL, pts,
                         "relaxed lower transition below base lower transition", s, t)
                col.flag("overlay_dominance", cv.upper[s, :, t] > tab.upper[s, :, t] + POINT_TOL, pts,
                         "relaxed upper transition above base upper transition", s, t)
            col.flag("overlay_dominance", tab.reward_lower[s] > cv.reward_lower[s] + POINT_TOL, pts,
                     "relaxed lower reward below base lower reward", s)

        cv_pts = _sample_points(ov.action_box, rng, samples)
        _interval_checks(col, relaxed, cv_pts, prefix="relaxed_")

        a = ov.action_box.sample(rng, samples)
        b = ov.action_box.sample(rng, samples)
        mid = 0.5 * (a + b)
        ta, tb, tm = (tabulate(relaxed, x) for x in (a, b, mid))
        for s in range(n):
            gap = tm.reward_lower[s] - 0.5 * (ta.reward_lower[s] + tb.reward_lower[s])
            col.flag("concavity", gap < -CURVATURE_TOL, a, "relaxed lower reward is not concave", s, pair=b)
            for t in range(n):
                gap = tm.lower[s, :, t] - 0.5 * (ta.lower[s, :, t] + tb.lower[s, :, t])
                col.flag("concavity", gap < -CURVATURE_TOL, a, "relaxed lower transition is not concave", s, t, pair=b)
                gap = tm.upper[s, :, t] - 0.5 * (ta.upper[s, :, t] + tb.upper[s, :, t])
                col.flag("convexity", gap > CURVATURE_TOL, a, "relaxed upper transition is not convex", s, t, pair=b)
    except ExpressionError as err:
        report.violations.append(Violation("evaluation", str(err)))
    return report
