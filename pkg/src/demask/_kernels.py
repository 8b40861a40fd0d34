"""Inner-loop kernels for the coordinate-pair grid search.

Two implementations with identical semantics:

* a numba ``@njit`` kernel (default), and
* a pure-numpy fallback, selected by setting the environment variable
  ``DEMASK_NO_NUMBA=1`` before import (also used automatically when numba
  is not importable).

``benchmarks/bench_sweep.py`` times one against the other.

A sweep processes adjacent component pairs (i, i+1) in ascending order.  For
each pair it evaluates the G+1 candidate splits of the pair mass s:
``p_i = s*j/G``, ``p_{i+1} = s - p_i`` and adopts the best strictly-improving
candidate (ties keep the smallest j; no strict improvement keeps the current
values).  Only matrix rows where the two columns differ and the observed
count is positive can change the log-likelihood, so the sweep touches just
those rows, packed CSR-style per pair by ``pair_structure``.
"""

from __future__ import annotations

import math
import os

import numpy as np


def pair_structure(matrix: np.ndarray, obs: np.ndarray):
    """Pack, for every adjacent column pair, the rows that matter.

    Returns (ptr, rows, diff, w): for pair i the slice ptr[i]:ptr[i+1] lists
    row indices with ``diff = M[k,i] - M[k,i+1] != 0`` and ``obs[k] > 0``,
    together with the observed counts w.
    """
    n_rows, n_cols = matrix.shape
    ptr = [0]
    rows = []
    diff = []
    w = []
    pos = obs > 0
    for i in range(n_cols - 1):
        e = matrix[:, i] - matrix[:, i + 1]
        sel = np.flatnonzero((e != 0.0) & pos)
        rows.extend(sel.tolist())
        diff.extend(e[sel].tolist())
        w.extend(obs[sel].tolist())
        ptr.append(len(rows))
    return (
        np.asarray(ptr, dtype=np.int64),
        np.asarray(rows, dtype=np.int64),
        np.asarray(diff, dtype=np.float64),
        np.asarray(w, dtype=np.float64),
    )


def _sweep_epoch_py(p, r, ptr, rows, diff, w, pos_rows, pos_w, grid, ll_total):
    """One full sweep over all adjacent pairs (reference implementation).

    Mutates ``p`` and ``r`` in place.  Returns
    (updates, ll_total, trace, worst_sum_err, worst_min_p) where trace holds
    the running log-likelihood after each pair update and the worst-case
    diagnostics cover every iterate of the epoch.
    """
    n_pairs = ptr.shape[0] - 1
    trace = np.empty(n_pairs)
    updates = 0
    worst_sum_err = 0.0
    worst_min_p = np.inf

    for i in range(n_pairs):
        s = p[i] + p[i + 1]
        t0, t1 = ptr[i], ptr[i + 1]
        base = 0.0
        for t in range(t0, t1):
            rk = r[rows[t]]
            if rk <= 0.0:
                base = -np.inf
                break
            base += w[t] * math.log(rk)

        best_val = base
        best_j = -1
        for j in range(grid + 1):
            pi_new = s * (j / grid)
            delta = pi_new - p[i]
            val = 0.0
            for t in range(t0, t1):
                rk = r[rows[t]] + delta * diff[t]
                if rk <= 0.0:
                    val = -np.inf
                    break
                val += w[t] * math.log(rk)
            if val > best_val:
                best_val = val
                best_j = j

        if best_j >= 0:
            pi_new = s * (best_j / grid)
            delta = pi_new - p[i]
            for t in range(t0, t1):
                r[rows[t]] += delta * diff[t]
            p[i] = pi_new
            p[i + 1] = s - pi_new
            updates += 1
            if math.isinf(base):
                # regained feasibility: rebuild the total from scratch
                ll_total = 0.0
                for t in range(pos_rows.shape[0]):
                    rk = r[pos_rows[t]]
                    if rk <= 0.0:
                        ll_total = -np.inf
                        break
                    ll_total += pos_w[t] * math.log(rk)
            else:
                ll_total += best_val - base

        trace[i] = ll_total
        ssum = 0.0
        smin = np.inf
        for c in range(p.shape[0]):
            ssum += p[c]
            if p[c] < smin:
                smin = p[c]
        err = abs(ssum - 1.0)
        if err > worst_sum_err:
            worst_sum_err = err
        if smin < worst_min_p:
            worst_min_p = smin

    return updates, ll_total, trace, worst_sum_err, worst_min_p


def _sweep_epoch_numpy(p, r, ptr, rows, diff, w, pos_rows, pos_w, grid, ll_total):
    """Vectorized fallback: same pair schedule, candidates batched per pair."""
    n_pairs = ptr.shape[0] - 1
    trace = np.empty(n_pairs)
    updates = 0
    worst_sum_err = 0.0
    worst_min_p = np.inf
    frac = np.arange(grid + 1) / grid

    for i in range(n_pairs):
        s = p[i] + p[i + 1]
        t0, t1 = int(ptr[i]), int(ptr[i + 1])
        rr = r[rows[t0:t1]]
        ww = w[t0:t1]
        ee = diff[t0:t1]

        if np.any(rr <= 0.0):
            base = -np.inf
        else:
            base = float(np.log(rr) @ ww)

        delta = s * frac - p[i]
        cand = rr[None, :] + delta[:, None] * ee[None, :]
        bad = (cand <= 0.0).any(axis=1)
        vals = np.log(np.where(cand > 0.0, cand, 1.0)) @ ww
        vals[bad] = -np.inf

        best_j = int(np.argmax(vals))  # first occurrence = smallest j
        if vals[best_j] > base:
            pi_new = s * (best_j / grid)
            d = pi_new - p[i]
            r[rows[t0:t1]] += d * ee
            p[i] = pi_new
            p[i + 1] = s - pi_new
            updates += 1
            if np.isinf(base):
                rp = r[pos_rows]
                if np.any(rp <= 0.0):
                    ll_total = -np.inf
                else:
                    ll_total = float(np.log(rp) @ pos_w)
            else:
                ll_total += float(vals[best_j]) - base

        trace[i] = ll_total
        worst_sum_err = max(worst_sum_err, abs(float(p.sum()) - 1.0))
        worst_min_p = min(worst_min_p, float(p.min()))

    return updates, ll_total, trace, worst_sum_err, worst_min_p


def _want_numba() -> bool:
    return os.environ.get("DEMASK_NO_NUMBA", "0").strip().lower() not in (
        "1",
        "true",
        "yes",
    )


sweep_epoch_numba = None
if _want_numba():
    try:
        from numba import njit

        sweep_epoch_numba = njit(cache=True)(_sweep_epoch_py)
    except ImportError:  # pragma: no cover - numba is a declared dependency
        sweep_epoch_numba = None

sweep_epoch_numpy = _sweep_epoch_numpy

if sweep_epoch_numba is not None:
    sweep_epoch = sweep_epoch_numba
    BACKEND = "numba"
else:
    sweep_epoch = sweep_epoch_numpy
    BACKEND = "numpy"
