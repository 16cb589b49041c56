"""Greedy O-maximisation over a whole table of (state, action) rows.

Given the descending order of ``v`` and interval bounds ``lo``/``hi`` of shape
``(S, G, n)``, each row gets the largest pivot position ``j`` such that the
residual mass

    xi_j = 1 - sum_{i<j} first[order[i]] - sum_{i>j} second[order[i]]

lies in ``[lo[order[j]], hi[order[j]]]``, and the resulting expected value.
For the minimum ``first`` is the lower bound (least mass on high values); for
the maximum ``first`` is the upper bound.

Two interchangeable backends: a numba ``@njit`` loop and a vectorised numpy
version.  Set ``IMDP_DISABLE_NUMBA=1`` to force numpy.
"""

from __future__ import annotations

import os

import numpy as np

FEAS_TOL = 1e-12

try:  # pragma: no cover - exercised implicitly
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get("IMDP_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")


def greedy_table_numpy(v, order, lo, hi, maximize, tol=FEAS_TOL):
    """Returns ``(values, pivots)`` of shape ``(S, G)``; pivot -1 marks infeasible rows."""
    first, second = (hi, lo) if maximize else (lo, hi)
    vo = v[order]
    fo = first[..., order]
    so = second[..., order]
    n = vo.shape[0]
    # exclusive prefix of `first`, exclusive suffix of `second`
    pre = np.cumsum(fo, axis=-1) - fo
    suf = np.cumsum(so[..., ::-1], axis=-1)[..., ::-1] - so
    xi = 1.0 - pre - suf
    feas = (xi >= lo[..., order] - tol) & (xi <= hi[..., order] + tol)
    any_feas = feas.any(axis=-1)
    j = n - 1 - np.argmax(feas[..., ::-1], axis=-1)
    vj = vo[j]
    diff = vo - vj[..., None]
    pos = np.arange(n)
    coef = np.where(pos < j[..., None], fo, np.where(pos > j[..., None], so, 0.0))
    values = (diff * coef).sum(axis=-1) + vj
    values = np.where(any_feas, values, np.nan)
    pivots = np.where(any_feas, j, -1)
    return values, pivots


def _greedy_table_loop(v, order, lo, hi, maximize, tol):
    S, G, n = lo.shape
    values = np.empty((S, G))
    pivots = np.empty((S, G), dtype=np.int64)
    pre = np.empty(n)
    suf = np.empty(n)
    vo = np.empty(n)
    for i in range(n):
        vo[i] = v[order[i]]
    for s in range(S):
        for g in range(G):
            if maximize:
                first = hi[s, g]
                second = lo[s, g]
            else:
                first = lo[s, g]
                second = hi[s, g]
            acc = 0.0
            for i in range(n):
                pre[i] = acc
                acc += first[order[i]]
            acc = 0.0
            for i in range(n - 1, -1, -1):
                suf[i] = acc
                acc += second[order[i]]
            j = -1
            for k in range(n - 1, -1, -1):
                xi = 1.0 - pre[k] - suf[k]
                t = order[k]
                if xi >= lo[s, g, t] - tol and xi <= hi[s, g, t] + tol:
                    j = k
                    break
            pivots[s, g] = j
            if j < 0:
                values[s, g] = np.nan
                continue
            vj = vo[j]
            total = 0.0
            for i in range(j):
                total += (vo[i] - vj) * first[order[i]]
            for i in range(j + 1, n):
                total += (vo[i] - vj) * second[order[i]]
            values[s, g] = total + vj
    return values, pivots


if HAVE_NUMBA:
    _greedy_table_jit = njit(cache=True)(_greedy_table_loop)

    def greedy_table_numba(v, order, lo, hi, maximize, tol=FEAS_TOL):
        return _greedy_table_jit(
            np.ascontiguousarray(v, dtype=np.float64),
            np.ascontiguousarray(order, dtype=np.int64),
            np.ascontiguousarray(lo, dtype=np.float64),
            np.ascontiguousarray(hi, dtype=np.float64),
            bool(maximize),
            float(tol),
        )

else:  # pragma: no cover
    greedy_table_numba = None


BACKENDS = {"numpy": greedy_table_numpy}
if HAVE_NUMBA:
    BACKENDS["numba"] = greedy_table_numba

_backend = "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in BACKENDS:
        raise ValueError(f"unknown or unavailable backend {name!r}")
    _backend = name


def greedy_table(v, order, lo, hi, maximize, backend=None):
    fn = BACKENDS[backend or _backend]
    return fn(v, order, lo, hi, maximize)
