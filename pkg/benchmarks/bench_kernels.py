"""Compare the numba and numpy greedy kernels and a full grid solve.

    python3 benchmarks/bench_kernels.py [--states 8] [--grid 1001] [--repeat 5]
"""

import argparse
import time

import numpy as np

from imdp import _kernels
from imdp.bellman import GridOperator, order_permutation
from imdp.model import model_from_dict
from imdp.solver import SolveConfig, solve
from imdp.synthetic import random_model_dict

def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out

def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--states", type=int, default=8)
    p.add_argument("--grid", type=int, default=1001)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    backends = [b for b in ("numba", "numpy") if b in _kernels.BACKENDS]
    rng = np.random.default_rng(args.seed)
    model = model_from_dict(random_model_dict(args.states, 1, seed=args.seed))

    op = GridOperator(model, args.grid)
    lo, hi = op.table.lower, op.table.upper
    v = rng.uniform(0, 10, size=args.states)
    order = order_permutation(v)

    print(f"kernel: {args.states} states x {op.n_actions} actions, best of {args.repeat}")
    ref = None
    for name in backends:
        _kernels.greedy_table(v, order, lo, hi, False, backend=name)  # warm-up / JIT
        t, (vals, _) = best_of(lambda: _kernels.greedy_table(v, order, lo, hi, False, backend=name), args.repeat)
        diff = 0.0 if ref is None else float(np.max(np.abs(vals - ref)))
        ref = vals if ref is None else ref
        print(f"  {name:6s} {t * 1e3:9.3f} ms   max |diff| {diff:.1e}")

    print("solve: pessimistic grid VI, tol 1e-6")
    for name in backends:
        cfg = SolveConfig(grid=args.grid, tol=1e-6, backend=name)
        solve(model, cfg)
        t, res = best_of(lambda: solve(model, cfg), max(1, args.repeat // 2))
        print(f"  {name:6s} {t * 1e3:9.1f} ms   {res.iterations} iterations")

if __name__ == "__main__":
    main()
