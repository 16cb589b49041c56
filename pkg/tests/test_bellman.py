import numpy as np
import pytest

from imdp.bellman import (
    GridOperator,
    InfeasibleError,
    f_lower,
    f_upper,
    g_lower_grid,
    g_upper_grid,
    greedy_bound,
    iota_lower,
    iota_upper,
    lambda_,
    omega,
    order_permutation,
)
from imdp.model import model_from_dict
from imdp.oracle import BoxLP, lp_max, lp_min
from imdp.synthetic import random_model, random_model_dict

from conftest import random_bounds, random_values

V10 = np.array([1.0, 0.0])
LO = np.array([0.3, 0.4])
HI = np.array([0.8, 0.9])


def point_model(gamma=0.8):
    """Two states, two-dimensional action, degenerate intervals."""
    rows = {"x": ("0.25 + 0.5*a1", "0.75 - 0.5*a1"), "y": ("a2 / 2", "1 - a2 / 2")}
    transitions = []
    for s, (px, py) in rows.items():
        transitions.append({"from": s, "to": "x", "lower": px, "upper": px})
        transitions.append({"from": s, "to": "y", "lower": py, "upper": py})
    return model_from_dict({
        "states": ["x", "y"],
        "action_dim": 2,
        "action_space": {"lower": [0.0, 0.0], "upper": [1.0, 1.0]},
        "gamma": gamma,
        "transitions": transitions,
        "rewards": [
            {"state": "x", "lower": "a1 - a2^2", "upper": "a1 - a2^2"},
            {"state": "y", "lower": "2 - a1*a2", "upper": "2 - a1*a2"},
        ],
    })


def classical(v, pi, model):
    out = []
    for s in range(model.n_states):
        p = np.array([model.trans_lower[s][t](pi[s]) for t in range(model.n_states)])
        out.append(model.reward_lower[s](pi[s]) + model.gamma * p @ v)
    return np.array(out)


# -- order and pivots ----------------------------------------------------------


@pytest.mark.parametrize("v,order", [([1, 0], [0, 1]), ([0, 1], [1, 0]), ([3, 3, 1], [0, 1, 2])])
def test_order_permutation(v, order):
    assert order_permutation(v).tolist() == order


def test_iota_lower_example():
    # second position: residual 1 - 0.3 = 0.7 lies in [0.4, 0.9]
    assert iota_lower(V10, LO, HI) == 1


def test_iota_upper_example():
    # first position: residual 1 - 0.4 = 0.6 lies in [0.3, 0.8]; second position
    # gives 1 - 0.8 = 0.2 outside [0.4, 0.9]
    assert iota_upper(V10, LO, HI) == 0
    val, vert, _ = greedy_bound(V10, LO, HI, maximize=True)
    assert val == pytest.approx(lp_max(BoxLP(V10, LO, HI))[0], abs=1e-15)
    assert vert.pivot == 0


@pytest.mark.parametrize("n", [1, 2, 4, 7])
def test_iota_point_intervals(n):
    rng = np.random.default_rng(n)
    p = rng.dirichlet(np.ones(n))
    v = rng.normal(size=n)
    assert iota_lower(v, p, p) == n - 1
    assert iota_upper(v, p, p) == n - 1


@pytest.mark.parametrize("n", [2, 3, 6])
def test_iota_uniform_bounds(n):
    v = np.arange(n, 0, -1, dtype=float)
    lo, hi = np.zeros(n), np.ones(n)
    # largest feasible position is the second one (0-based 1): beyond it the
    # residual 1 - sum of full upper bounds is negative
    assert iota_upper(v, lo, hi) == 1
    val, _, _ = greedy_bound(v, lo, hi, maximize=True)
    assert val == pytest.approx(lp_max(BoxLP(v, lo, hi))[0]) == pytest.approx(float(n))


def test_iota_infeasible():
    with pytest.raises(InfeasibleError):
        iota_lower(V10, [0.9, 0.9], [0.95, 0.95])
    with pytest.raises(InfeasibleError):
        iota_upper(V10, [0.9, 0.9], [0.95, 0.95])


# -- omega / lambda ------------------------------------------------------------


def test_omega_lambda_examples():
    assert greedy_bound(V10, LO, HI)[0] == pytest.approx(0.3)
    assert greedy_bound(V10, LO, HI, maximize=True)[0] == pytest.approx(0.6)
    rng = np.random.default_rng(0)
    for n in (2, 5):
        lo, hi = random_bounds(rng, n)
        v = np.full(n, 5.0)
        assert greedy_bound(v, lo, hi)[0] == pytest.approx(5.0)
        assert greedy_bound(v, lo, hi, maximize=True)[0] == pytest.approx(5.0)


def test_lambda_point_intervals():
    p = np.array([0.2, 0.5, 0.3])
    v = np.array([1.0, -2.0, 4.0])
    assert greedy_bound(v, p, p, maximize=True)[0] == pytest.approx(p @ v)


def test_omega_example1_at_right_endpoint(example1):
    val, vert, _ = omega(V10, 0, [1.0], example1)
    assert val == pytest.approx(0.5)
    np.testing.assert_allclose(vert.probabilities, [0.5, 0.5])


def test_oracle_equivalence():
    rng = np.random.default_rng(20240)
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        lo, hi = random_bounds(rng, n)
        v = random_values(rng, n)
        problem = BoxLP(v, lo, hi)
        assert abs(greedy_bound(v, lo, hi)[0] - lp_min(problem)[0]) <= 1e-9
        assert abs(greedy_bound(v, lo, hi, maximize=True)[0] - lp_max(problem)[0]) <= 1e-9


def test_vertex_feasibility():
    rng = np.random.default_rng(11)
    for _ in range(500):
        n = int(rng.integers(1, 12))
        lo, hi = random_bounds(rng, n)
        v = random_values(rng, n)
        for maximize in (False, True):
            val, vert, _ = greedy_bound(v, lo, hi, maximize)
            p = vert.probabilities
            assert abs(p.sum() - 1) <= 1e-12
            assert np.all(p >= lo - 1e-12) and np.all(p <= hi + 1e-12)
            assert p @ v == pytest.approx(val, abs=1e-12)


def test_lp_min_le_lp_max():
    rng = np.random.default_rng(12)
    for _ in range(200):
        n = int(rng.integers(1, 8))
        lo, hi = random_bounds(rng, n)
        v = random_values(rng, n)
        assert greedy_bound(v, lo, hi)[0] <= greedy_bound(v, lo, hi, True)[0] + 1e-12


# -- operators -----------------------------------------------------------------


def test_f_gamma_zero(example1):
    m = example1.with_gamma(0.0)
    pi = np.array([[0.3], [0.8]])
    v = np.array([7.0, -2.0])
    np.testing.assert_allclose(f_lower(v, pi, m), [m.reward_lower[0](pi[0]), m.reward_lower[1](pi[1])])
    np.testing.assert_allclose(f_upper(v, pi, m), [m.reward_upper[0](pi[0]), m.reward_upper[1](pi[1])])


def test_f_point_intervals_is_classical():
    m = point_model()
    rng = np.random.default_rng(3)
    for _ in range(20):
        v = rng.normal(size=2) * 5
        pi = rng.uniform(size=(2, 2))
        ref = classical(v, pi, m)
        np.testing.assert_allclose(f_lower(v, pi, m), ref, atol=1e-12)
        np.testing.assert_allclose(f_upper(v, pi, m), ref, atol=1e-12)


def test_f_example1_relaxed_at_zero(example1_relaxed):
    np.testing.assert_allclose(f_lower(np.zeros(2), [[1.0], [0.0]], example1_relaxed), [4.0, 5.0])


def test_f_rejects_out_of_box(example1):
    with pytest.raises(ValueError):
        f_lower(np.zeros(2), [[1.5], [0.0]], example1)


def test_g_gamma_zero_example1(example1_relaxed):
    v, pi = g_lower_grid(np.zeros(2), example1_relaxed.with_gamma(0.0), 1001)
    np.testing.assert_allclose(v, [4.0, 5.0], atol=1e-6)
    assert pi[:, 0].tolist() == [1.0, 0.0]


def test_g_single_action_equals_f():
    doc = random_model_dict(3, m=2, seed=4)
    doc["action_space"] = {"lower": [0.3, 0.6], "upper": [0.3, 0.6]}
    m = model_from_dict(doc)
    v = np.array([1.0, -2.0, 0.5])
    pi = np.tile([0.3, 0.6], (3, 1))
    for upper, g, f in ((False, g_lower_grid, f_lower), (True, g_upper_grid, f_upper)):
        val, pol = g(v, m, 5)
        np.testing.assert_allclose(val, f(v, pi, m), atol=1e-12)
        np.testing.assert_array_equal(pol, pi)


def test_g_monotone_spot(example1):
    a, _ = g_lower_grid(np.zeros(2), example1, 101)
    b, _ = g_lower_grid(np.ones(2), example1, 101)
    assert np.all(a <= b + 1e-9)


def test_grid_operator_matches_pointwise(example1):
    op = GridOperator(example1, 11)
    v = np.array([2.0, -1.0])
    q = op.q_values(v)
    for g, a in enumerate(op.actions):
        for s in range(2):
            ref = example1.reward_lower[s](a) + example1.gamma * omega(v, s, a, example1)[0]
            assert q[s, g] == pytest.approx(ref, abs=1e-12)
            ref = example1.reward_upper[s](a) + example1.gamma * lambda_(v, s, a, example1)[0]
            assert op.q_values(v, upper=True)[s, g] == pytest.approx(ref, abs=1e-12)


def test_grid_operator_reports_infeasible_action():
    doc = random_model_dict(2, seed=0)
    doc["transitions"] = [{"from": "s0", "to": t, "lower": "0.9*a1", "upper": "0.95"} for t in ("s0", "s1")]
    op = GridOperator(model_from_dict(doc), 3)
    with pytest.raises(InfeasibleError, match="s0"):
        op.g(np.zeros(2))


def _models(count=10):
    return [random_model(int(n), m=int(m), seed=k, density=0.8)
            for k, (n, m) in enumerate(zip(np.resize([2, 3, 5, 8], count), np.resize([1, 2], count)))]


@pytest.mark.parametrize("model", _models(), ids=lambda m: f"n{m.n_states}m{m.action_dim}")
def test_monotone_and_contracting(model):
    rng = np.random.default_rng(model.n_states)
    op = GridOperator(model, 9 if model.action_dim == 1 else 5)
    n = model.n_states
    for _ in range(10):
        v = rng.uniform(-10, 10, size=n)
        w = v + rng.uniform(0, 5, size=n)
        u = rng.uniform(-10, 10, size=n)
        idx = rng.integers(op.n_actions, size=n)
        for upper in (False, True):
            gv, gw, gu = op.g(v, upper)[0], op.g(w, upper)[0], op.g(u, upper)[0]
            assert np.all(gv <= gw + 1e-9)
            assert np.max(np.abs(gv - gu)) <= model.gamma * np.max(np.abs(v - u)) + 1e-9
            fv, fw, fu = op.f(v, idx, upper), op.f(w, idx, upper), op.f(u, idx, upper)
            assert np.all(fv <= fw + 1e-9)
            assert np.max(np.abs(fv - fu)) <= model.gamma * np.max(np.abs(v - u)) + 1e-9


def test_omega_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    h = 1e-6
    checked = 0
    for k in range(40):
        model = random_model(int(rng.integers(2, 6)), m=2, seed=100 + k)
        for _ in range(10):
            s = int(rng.integers(model.n_states))
            a = rng.uniform(0.05, 0.95, size=2)
            v = rng.uniform(-10, 10, size=model.n_states)
            val, vert, grad = omega(v, s, a, model)
            for i in range(2):
                step = np.zeros(2)
                step[i] = h
                fp, vp, _ = omega(v, s, a + step, model)
                fm, vm, _ = omega(v, s, a - step, model)
                if not (vp.pivot == vert.pivot == vm.pivot):
                    break
                fd = (fp - fm) / (2 * h)
                assert abs(grad[i] - fd) / max(1.0, abs(grad[i])) <= 1e-5
            else:
                checked += 1
    assert checked >= 100
