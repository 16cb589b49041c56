"""Acceptance criteria, one test each, at the stated tolerances.

Every test records a single ``criterion N: PASS|FAIL ...`` line, printed in
the pytest terminal summary (and to stdout when run with ``-s``).
"""

import time
import warnings

import numpy as np

from imdp.bellman import GridOperator, f_lower, greedy_bound, omega
from imdp.expr import evaluate, parse
from imdp.model import model_from_dict
from imdp.oracle import BoxLP, lp_max, lp_min, mdp_bellman, mdp_policy_operator, sample_member_mdp
from imdp.relax import GradientConfig, check_forward_invariance, estimate_constants, value_policy_iterate
from imdp.solver import SolveConfig, certify_fixed_point, solve
from imdp.synthetic import example1_dict, random_model

from conftest import ACCEPTANCE_LINES, EXAMPLE1_VALUE, random_bounds

REPORTED_FIXED_POINT = np.array([43.1820, 43.8891])
REPORTED_GRADIENT_VALUE = np.array([35.2000, 39.2000])
REPORTED_GRADIENT_UPPER = np.array([52.7000, 56.7000])


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def example1():
    return model_from_dict(example1_dict())


def random_models(count, seed, **kw):
    rng = np.random.default_rng(seed)
    return [random_model(int(rng.integers(2, 7)), m=int(rng.integers(1, 3)), seed=seed * 100 + k,
                         density=float(rng.uniform(0.5, 1.0)), **kw) for k in range(count)]


def _grid_op(model):
    return GridOperator(model, 11 if model.action_dim == 1 else 5)


def test_criterion_01_example1_fixed_point():
    t0 = time.perf_counter()
    res = solve(example1().relaxed(), SolveConfig(grid=1001, tol=1e-4))
    elapsed = time.perf_counter() - t0
    err = np.abs(res.value - REPORTED_FIXED_POINT)
    ok = bool(np.all(err <= 5e-3) and elapsed < 10.0)
    report(1, ok, f"values {np.round(res.value, 4).tolist()} vs {REPORTED_FIXED_POINT.tolist()}, "
                  f"max error {err.max():.4f} (tol 5e-3), {elapsed:.2f}s (limit 10s)")


def test_criterion_02_example1_gradient_scheme():
    model = example1()
    constants = estimate_constants(model, samples=2000, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj, bound = value_policy_iterate(model, GradientConfig(beta=0.01, inner_steps=1, iterations=1000),
                                           constants=constants)
    v_err = np.abs(bound.vk - REPORTED_GRADIENT_VALUE).max()
    u_err = np.abs(bound.upper - REPORTED_GRADIENT_UPPER).max()
    below = bool(np.all(traj.values <= REPORTED_FIXED_POINT + 1e-3))
    below_computed = bool(np.all(traj.values <= EXAMPLE1_VALUE + 1e-3))
    ok = bool(v_err <= 0.5 and u_err <= 1.0 and below)
    report(2, ok, f"v^1000 {np.round(bound.vk, 4).tolist()} (|err| {v_err:.3f}, tol 0.5); "
                  f"upper {np.round(bound.upper, 2).tolist()} (|err| {u_err:.2f}, tol 1.0); "
                  f"v^k <= {REPORTED_FIXED_POINT.tolist()} + 1e-3 for all k: {below} "
                  f"(<= computed fixed point {np.round(EXAMPLE1_VALUE, 4).tolist()} + 1e-3: {below_computed})")


def test_criterion_03_oracle_equivalence():
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        lo, hi = random_bounds(rng, n)
        v = rng.uniform(-10, 10, size=n)
        problem = BoxLP(v, lo, hi)
        worst = max(worst, abs(greedy_bound(v, lo, hi)[0] - lp_min(problem)[0]),
                    abs(greedy_bound(v, lo, hi, maximize=True)[0] - lp_max(problem)[0]))
    elapsed = time.perf_counter() - t0
    report(3, worst <= 1e-9 and elapsed < 30.0,
           f"1000 instances, worst |closed form - LP| {worst:.2e} (tol 1e-9), {elapsed:.2f}s (limit 30s)")


def test_criterion_04_contraction():
    worst = -np.inf
    for model in random_models(10, seed=4):
        op = _grid_op(model)
        rng = np.random.default_rng(model.n_states)
        n = model.n_states
        for _ in range(100):
            v, w = rng.uniform(-10, 10, size=(2, n))
            idx = rng.integers(op.n_actions, size=n)
            lim = model.gamma * np.max(np.abs(v - w))
            for upper in (False, True):
                worst = max(worst,
                            np.max(np.abs(op.g(v, upper)[0] - op.g(w, upper)[0])) - lim,
                            np.max(np.abs(op.f(v, idx, upper) - op.f(w, idx, upper))) - lim)
    report(4, worst <= 1e-9, f"10 models x 100 pairs, max(||Gv-Gw|| - gamma||v-w||) = {worst:.2e} (tol 1e-9)")


def test_criterion_05_monotonicity():
    worst = -np.inf
    for model in random_models(10, seed=5):
        op = _grid_op(model)
        rng = np.random.default_rng(model.n_states + 50)
        for _ in range(100):
            v = rng.uniform(-10, 10, size=model.n_states)
            w = v + rng.uniform(0, 5, size=model.n_states)
            for upper in (False, True):
                worst = max(worst, np.max(op.g(v, upper)[0] - op.g(w, upper)[0]))
    report(5, worst <= 1e-9, f"10 models x 100 ordered pairs, max(G(v) - G(w)) = {worst:.2e} (tol 1e-9)")


def test_criterion_06_sandwich():
    worst = -np.inf
    for k, model in enumerate(random_models(5, seed=6)):
        op = _grid_op(model)
        rng = np.random.default_rng(k)
        n = model.n_states
        for j in range(20):
            mdp = sample_member_mdp(model, seed=100 * k + j, actions=op.actions)
            for _ in range(20):
                v = rng.uniform(-10, 10, size=n)
                idx = rng.integers(op.n_actions, size=n)
                f_m, g_m = mdp_policy_operator(v, mdp, idx), mdp_bellman(v, mdp)
                worst = max(worst,
                            np.max(op.f(v, idx) - f_m), np.max(f_m - op.f(v, idx, True)),
                            np.max(op.g(v)[0] - g_m), np.max(g_m - op.g(v, True)[0]))
    report(6, worst <= 1e-9, f"5 IMDPs x 20 members x 20 v, worst sandwich gap {worst:.2e} (tol 1e-9)")


def test_criterion_07_relaxation_dominance():
    models = [example1()] + [random_model(3, m=1 + k % 2, seed=70 + k, relaxed=True, enlarge=0.05 * k)
                             for k in range(5)]
    f_gap = g_gap = v_gap = -np.inf
    for model in models:
        relaxed = model.relaxed()
        rng = np.random.default_rng(model.n_states)
        res = 101 if model.action_dim == 1 else 21
        base_op = GridOperator(model, res)
        cv_op = GridOperator(relaxed, actions=base_op.actions)
        for _ in range(20):
            v = rng.uniform(0, 50, size=model.n_states)
            pi = model.action_box.sample(rng, model.n_states)
            f_gap = max(f_gap, np.max(f_lower(v, pi, model) - f_lower(v, pi, relaxed)))
            g_gap = max(g_gap, np.max(base_op.g(v)[0] - cv_op.g(v)[0]))
        vb = solve(model, SolveConfig(grid=res, tol=1e-9)).value
        vc = solve(relaxed, SolveConfig(grid=res, tol=1e-9)).value
        v_gap = max(v_gap, np.max(vb - vc))
    ok = f_gap <= 1e-9 and g_gap <= 1e-9 and v_gap <= 1e-6
    report(7, ok, f"6 models, max F-Fcv {f_gap:.2e}, max G-Gcv {g_gap:.2e} (tol 1e-9), "
                  f"max V*p - V*cv {v_gap:.2e} (tol 1e-6)")


def test_criterion_08_gradients():
    rng = np.random.default_rng(8)
    h = 1e-6
    corpus = ["1 + 4*a1*sqrt(a1) - a1^3", "5 - a1*sqrt(a1)", "exp(-a1) * log(1 + a2)", "a1^2.5 / (1 + a2^2)"]
    expr_worst = 0.0
    for text in corpus:
        e = parse(text, 2)
        for a in rng.uniform(0.1, 0.9, size=(100, 2)):
            g = evaluate(e, a).gradient
            for k in range(2):
                d = np.eye(2)[k] * h
                fd = (e(a + d) - e(a - d)) / (2 * h)
                expr_worst = max(expr_worst, abs(g[k] - fd) / max(1.0, abs(g[k])))

    omega_worst, checked, k = 0.0, 0, 0
    while checked < 100:
        model = random_model(int(rng.integers(2, 6)), m=2, seed=800 + k)
        k += 1
        s = int(rng.integers(model.n_states))
        a = rng.uniform(0.05, 0.95, size=2)
        v = rng.uniform(-10, 10, size=model.n_states)
        _, vert, g = omega(v, s, a, model)
        errs = []
        for i in range(2):
            d = np.eye(2)[i] * h
            fp, vp, _ = omega(v, s, a + d, model)
            fm, vm, _ = omega(v, s, a - d, model)
            if not (vp.pivot == vert.pivot == vm.pivot):
                break
            errs.append(abs(g[i] - (fp - fm) / (2 * h)) / max(1.0, abs(g[i])))
        else:
            omega_worst = max(omega_worst, *errs)
            checked += 1
    ok = expr_worst <= 1e-5 and omega_worst <= 1e-5
    report(8, ok, f"expression autodiff worst rel. error {expr_worst:.2e}, "
                  f"omega gradient worst {omega_worst:.2e} over {checked} points (tol 1e-5)")


def test_criterion_09_forward_invariance():
    model = example1()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        traj, _ = value_policy_iterate(model, GradientConfig(beta=0.01, inner_steps=1, iterations=1000), samples=500)
    inv = check_forward_invariance(traj, model, m_bar=5.0)
    report(9, inv.ok and abs(inv.cap - 50.0) <= 1e-9,
           f"{len(traj.steps)} iterates in [0, {inv.cap:g}]: min {traj.values.min():.3f}, "
           f"max {traj.values.max():.3f}, violations {len(inv.violations)}")


def test_criterion_10_fixed_point_certification():
    worst_ratio = 0.0
    worst_drop = 0.0
    models = [example1(), example1().relaxed()] + random_models(6, seed=10)
    for model in models:
        for mode in ("pessimistic", "optimistic"):
            grid = 51 if model.action_dim == 1 else 9
            for tol in (1e-4, 1e-6):
                res = solve(model, SolveConfig(mode=mode, grid=grid, tol=tol), keep_history=True)
                r = certify_fixed_point(res.value, model, mode, grid)
                worst_ratio = max(worst_ratio, r / (tol * (1 - model.gamma)))
                worst_drop = max(worst_drop, -np.min(np.diff(np.array(res.history), axis=0)))
    ok = worst_ratio <= 1.0 and worst_drop <= 0.0
    report(10, ok, f"{len(models) * 4} solves: max residual / (tol(1-gamma)) = {worst_ratio:.3f} (<= 1), "
                   f"largest decrease between iterates {worst_drop:.2e} (must be 0)")
