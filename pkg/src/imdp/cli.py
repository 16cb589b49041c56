"""Command-line front end.

    imdp solve MODEL [--mode pessimistic|optimistic] [--method grid|gradient] [--relaxed] ...
    imdp validate MODEL [--samples N] [--seed S]
    imdp oracle-check MODEL [--trials N] [--seed S] [--max-states 12]

Results go to a JSON file (``--out``); a short summary goes to stdout.
Exit codes: 0 success, 1 input error, 2 no convergence, 3 violations found.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
import warnings

import numpy as np

from . import __version__, bellman
from .expr import ExpressionError
from .model import ModelError, load_model, model_digest, tabulate, validate
from .oracle import (
    MAX_ORACLE_STATES,
    BoxLP,
    lp_max,
    lp_min,
    mdp_bellman,
    mdp_policy_operator,
    sample_member_mdp,
)
from .relax import GradientConfig, estimate_constants, value_policy_iterate
from .solver import NonConvergenceError, SolveConfig, solve

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_VIOLATIONS = 0, 1, 2, 3
CHECK_TOL = 1e-9


class InputError(Exception):
    pass


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _per_state(states, values):
    return {s: _num(v) for s, v in zip(states, values)}


def _write(path, payload):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _load(path):
    try:
        return load_model(path), model_digest(path)
    except FileNotFoundError:
        raise InputError(f"file not found: {path}") from None
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from None
    except (ModelError, ExpressionError) as err:
        raise InputError(f"invalid model {path}: {err}") from None


def _header(args, digest):
    return {
        "version": __version__,
        "command": " ".join(["imdp"] + args.argv),
        "model_digest": digest,
        "seed": args.seed,
    }


# -- solve --------------------------------------------------------------------


def cmd_solve(args) -> int:
    model, digest = _load(args.model)
    if args.relaxed or args.method == "gradient":
        if args.mode == "optimistic":
            raise InputError("relaxations and the gradient method are pessimistic only")
    if args.relaxed and model.relaxation is None:
        raise InputError("--relaxed given but the model has no relaxation overlay")
    target = model.relaxed() if args.relaxed else model

    out = _header(args, digest)
    out.update({"mode": args.mode, "method": args.method, "relaxed": bool(args.relaxed)})
    start = time.perf_counter()
    code = EXIT_OK
    if args.method == "grid":
        config = SolveConfig(mode=args.mode, grid=args.grid, tol=args.tol, max_iterations=args.max_iters)
        try:
            result = solve(target, config)
        except NonConvergenceError as err:
            result = err.result
            code = EXIT_NONCONVERGED
            print(f"warning: {err}", file=sys.stderr)
        v, err_bound = result.value, result.certified_error
        out.update({
            "values": _per_state(model.states, v),
            "policy": {s: [float(x) for x in a] for s, a in zip(model.states, result.policy)},
            "bounds": {"lower": _per_state(model.states, v - err_bound),
                       "upper": _per_state(model.states, v + err_bound)},
            "iterations": result.iterations,
            "residual": _num(result.residual),
            "converged": result.converged,
            "epsilon": None,
            "constants": None,
        })
    else:
        # the gradient scheme always runs on the overlay when one is present
        gradient_model = model
        constants = estimate_constants(gradient_model, samples=args.samples, seed=args.seed)
        config = GradientConfig(beta=args.beta, inner_steps=args.inner_steps, iterations=args.iters)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            traj, report = value_policy_iterate(gradient_model, config, constants=constants)
        if constants.flat:
            print("warning: strong concavity not observed; epsilon uses contraction factor 1", file=sys.stderr)
        residual = float(np.max(np.abs(traj.values[-1] - traj.values[-2])))
        out.update({
            "values": _per_state(model.states, report.vk),
            "policy": {s: [float(x) for x in a] for s, a in zip(model.states, traj.policies[-1])},
            "bounds": {"lower": _per_state(model.states, report.lower),
                       "upper": _per_state(model.states, report.upper)},
            "iterations": report.iterations,
            "residual": _num(residual),
            "converged": None,
            "epsilon": _num(report.epsilon),
            "constants": {k: (_num(v) if isinstance(v, float) else v)
                          for k, v in report.constants.to_dict().items()},
        })
    out["wall_time_s"] = None if args.no_timing else time.perf_counter() - start
    _write(args.out, out)
    print(f"{args.mode} {args.method}{' (relaxed)' if args.relaxed else ''}: "
          f"{out['iterations']} iterations, residual {out['residual']:.3e}")
    for s in model.states:
        print(f"  {s}: value {out['values'][s]:.6f}  bounds [{out['bounds']['lower'][s]:.6f}, "
              f"{out['bounds']['upper'][s]:.6f}]  action {out['policy'][s]}")
    print(f"wrote {args.out}")
    return code


# -- validate -----------------------------------------------------------------


def cmd_validate(args) -> int:
    if args.samples < 1:
        raise InputError("--samples must be >= 1")
    model, digest = _load(args.model)
    report = validate(model, samples=args.samples, seed=args.seed)
    out = _header(args, digest)
    out.update(report.to_dict())
    _write(args.out, out)
    if report.ok:
        print(f"ok: {len(report.checks)} checks passed on {args.samples} samples")
        print(f"wrote {args.out}")
        return EXIT_OK
    for v in report.violations:
        where = ", ".join(x for x in (v.state and f"state {v.state}", v.successor and f"successor {v.successor}") if x)
        print(f"violation [{v.check}] {v.detail} ({where}) witness {v.witness} x{v.count}")
    print(f"wrote {args.out}")
    return EXIT_VIOLATIONS


# -- oracle-check -------------------------------------------------------------


def run_oracle_check(model, trials: int, seed: int, max_states: int = MAX_ORACLE_STATES) -> dict:
    """Randomised comparison of the closed forms against brute force and member MDPs."""
    rng = np.random.default_rng(seed)
    n = model.n_states
    use_lp = n <= min(max_states, MAX_ORACLE_STATES)
    failures = []
    worst = {"omega_vs_lp": 0.0, "lambda_vs_lp": 0.0, "vertex": 0.0, "sandwich": 0.0}

    def fail(kind, detail):
        if len(failures) < 50:
            failures.append({"check": kind, **detail})

    for trial in range(trials):
        s = int(rng.integers(n))
        a = model.action_box.sample(rng, 1)[0]
        v = rng.uniform(-10.0, 10.0, size=n)
        om, om_vertex, _ = bellman.omega(v, s, a, model)
        la, la_vertex, _ = bellman.lambda_(v, s, a, model)
        tab = tabulate(model, a[None, :], rewards=False)
        lo, hi = tab.lower[s, 0], tab.upper[s, 0]
        ctx = {"trial": trial, "state": model.states[s], "action": a.tolist()}
        if om > la + CHECK_TOL:
            fail("omega_le_lambda", {**ctx, "omega": om, "lambda": la})
        for name, val, vert in (("omega", om, om_vertex), ("lambda", la, la_vertex)):
            p = vert.probabilities
            gap = max(float(np.max(lo - p)), float(np.max(p - hi)), abs(p.sum() - 1.0), abs(p @ v - val))
            worst["vertex"] = max(worst["vertex"], gap)
            if gap > CHECK_TOL:
                fail(f"{name}_vertex", {**ctx, "gap": gap})
        if use_lp:
            problem = BoxLP(v, lo, hi)
            ref_min, _ = lp_min(problem)
            ref_max, _ = lp_max(problem)
            for key, got, ref in (("omega_vs_lp", om, ref_min), ("lambda_vs_lp", la, ref_max)):
                err = abs(got - ref)
                worst[key] = max(worst[key], err)
                if err > CHECK_TOL:
                    fail(key, {**ctx, "closed_form": got, "oracle": ref})

    # sandwich against member MDPs on a small shared grid
    res = 3 if model.action_dim <= 3 else 2
    op = bellman.GridOperator(model, res)
    members = max(1, min(10, trials // 100))
    for k in range(members):
        mdp = sample_member_mdp(model, seed + 1000 + k, actions=op.actions)
        for _ in range(5):
            v = rng.uniform(-10.0, 10.0, size=n)
            idx = rng.integers(op.n_actions, size=n)
            lo_f, up_f, mid_f = op.f(v, idx), op.f(v, idx, upper=True), mdp_policy_operator(v, mdp, idx)
            lo_g, up_g, mid_g = op.g(v)[0], op.g(v, upper=True)[0], mdp_bellman(v, mdp)
            gap = float(max(np.max(lo_f - mid_f), np.max(mid_f - up_f),
                            np.max(lo_g - mid_g), np.max(mid_g - up_g)))
            worst["sandwich"] = max(worst["sandwich"], gap)
            if gap > CHECK_TOL:
                fail("sandwich", {"member": k, "gap": gap})

    return {
        "ok": not failures,
        "trials": trials,
        "lp_oracle": use_lp,
        "notice": None if use_lp else f"oracle skipped: {n} states exceeds limit {min(max_states, MAX_ORACLE_STATES)}",
        "members": members,
        "worst": worst,
        "failures": failures,
    }


def cmd_oracle_check(args) -> int:
    if args.trials < 1:
        raise InputError("--trials must be >= 1")
    model, digest = _load(args.model)
    report = run_oracle_check(model, args.trials, args.seed, args.max_states)
    out = _header(args, digest)
    out.update(report)
    _write(args.out, out)
    if report["notice"]:
        print(f"notice: {report['notice']}; invariant-only checks run")
    w = report["worst"]
    print(f"{args.trials} trials: worst |omega-lp| {w['omega_vs_lp']:.2e}, |lambda-lp| {w['lambda_vs_lp']:.2e}, "
          f"vertex {w['vertex']:.2e}, sandwich {w['sandwich']:.2e}")
    print(f"wrote {args.out}")
    return EXIT_OK if report["ok"] else EXIT_VIOLATIONS


# -- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"usage: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="imdp", description="Interval MDP solvers with continuous actions")
    p.add_argument("--version", action="version", version=f"imdp {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="pessimistic/optimistic value iteration or value-policy iteration")
    s.add_argument("model")
    s.add_argument("--mode", choices=("pessimistic", "optimistic"), default="pessimistic")
    s.add_argument("--method", choices=("grid", "gradient"), default="grid")
    s.add_argument("--relaxed", action="store_true", help="solve the relaxation overlay")
    s.add_argument("--grid", type=int, default=101, help="grid points per action dimension")
    s.add_argument("--tol", type=float, default=1e-6, help="sup-norm accuracy target")
    s.add_argument("--max-iters", type=int, default=100_000)
    s.add_argument("--beta", type=float, default=None, help="learning rate (default 1/L)")
    s.add_argument("--inner-steps", type=int, default=1)
    s.add_argument("--iters", type=int, default=1000, help="value-policy iterations")
    s.add_argument("--samples", type=int, default=2000, help="samples for constant estimation")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="result.json")
    s.add_argument("--no-timing", action="store_true", help="omit wall time for byte-identical output")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="sampling-based model and relaxation checks")
    v.add_argument("model")
    v.add_argument("--samples", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--out", default="validation.json")
    v.set_defaults(func=cmd_validate)

    o = sub.add_parser("oracle-check", help="closed forms against brute-force references")
    o.add_argument("model")
    o.add_argument("--trials", type=int, default=1000)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--max-states", type=int, default=MAX_ORACLE_STATES)
    o.add_argument("--out", default="oracle_check.json")
    o.set_defaults(func=cmd_oracle_check)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        args.argv = argv
        return args.func(args)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, ExpressionError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
