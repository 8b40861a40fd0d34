"""PMF recovery from masked histograms.

Four estimator families:

* ``ls_constrained`` -- sum-to-one constrained least squares, with a plain
  normal-equations path and a QR path.  Components can come out negative;
  they are flagged, never clamped, because that failure mode is the whole
  reason the likelihood-based estimators exist.
* ``mle_forward`` / ``mle_backward`` -- closed-form difference estimators for
  untruncated uniform-noise masking, anchored at the bottom / top of the
  support.  The forward formula ``p_j = m*(r_j - r_{j-1})`` is exact only
  while the convolution window is still growing (j <= m-1); beyond that it
  estimates ``p_j - p_{j-m}`` instead.  The bias is kept verbatim and a
  warning is recorded in the report.
* ``mle_combined`` -- per-component switch between forward and backward
  driven by whether the masked histogram rises or falls there.
* ``coordinate_mle`` -- the constrained maximizer: sweep adjacent component
  pairs, redistribute each pair's mass over a 1/G grid, keep the best
  strictly-improving split.  Every iterate is a valid PMF by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg

from . import _kernels
from .core import MixingMatrix
from .errors import InfeasibleStartError, RankDeficientError, ValidationError
from .likelihood import LikelihoodModel, loglik

PMF_TOL = 1e-9


@dataclass(frozen=True)
class EstimateReport:
    """A recovered PMF with diagnostics.

    ``groups[i]`` lists the true values component i stands for (more than
    one after class merging).  ``trace`` holds the running log-likelihood
    after every pair update when the estimator was asked to record it.
    """

    p_hat: np.ndarray
    method: str
    negative_components: Tuple[int, ...]
    iterations: int
    final_loglik: float
    warnings: Tuple[str, ...] = ()
    groups: Optional[Tuple[Tuple[int, ...], ...]] = None
    trace: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.p_hat, dtype=np.float64)
        p.setflags(write=False)
        object.__setattr__(self, "p_hat", p)
        object.__setattr__(
            self, "negative_components", tuple(int(j) for j in self.negative_components)
        )
        object.__setattr__(self, "warnings", tuple(self.warnings))


def _negatives(p: np.ndarray) -> Tuple[int, ...]:
    return tuple(int(j) for j in np.flatnonzero(p < 0))


def _loglik_or_nan(model: Optional[LikelihoodModel], p: np.ndarray) -> float:
    if model is None:
        return float("nan")
    if np.any(p < 0) or abs(p.sum() - 1.0) > PMF_TOL:
        return float("nan")
    return loglik(model, p)


def ls_constrained(
    model: LikelihoodModel,
    obs: Optional[np.ndarray] = None,
    use_qr: bool = False,
) -> EstimateReport:
    """Least squares fit of the masked PMF subject to sum(beta) = 1.

    Solves ``beta = (X'X)^-1 (X'y - lam * 1)`` with
    ``lam = (1'(X'X)^-1 X'y - 1) / (1'(X'X)^-1 1)``, where X is the mixing
    matrix and y the empirical masked PMF.  ``use_qr`` routes all solves
    through an orthogonal factorization of X instead of the normal
    equations; both paths agree to high accuracy on full-rank designs.
    """
    X = model.mixing.matrix
    if obs is None:
        obs = model.obs
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape != (X.shape[0],):
        raise ValidationError(
            f"obs must have length {X.shape[0]}, got shape {obs.shape}"
        )
    total = obs.sum()
    if total <= 0:
        raise ValidationError("observed total must be positive")
    y = obs / total

    # rank check via pivoted QR; report the redundant columns by index
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = diag[0] * max(X.shape) * np.finfo(float).eps if diag[0] > 0 else 0.0
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        raise RankDeficientError(sorted(int(c) for c in piv[rank:]))

    ones = np.ones(X.shape[1])
    if use_qr:
        Q, R = np.linalg.qr(X)
        qty = Q.T @ y

        def solve_normal(v):
            # (X'X)^-1 v = R^-1 R'^-1 v
            w = scipy.linalg.solve_triangular(R, v, trans="T", lower=False)
            return scipy.linalg.solve_triangular(R, w, lower=False)

        a_xty = solve_normal(R.T @ qty)
        a_ones = solve_normal(ones)
    else:
        A = X.T @ X
        xty = X.T @ y
        a_xty = np.linalg.solve(A, xty)
        a_ones = np.linalg.solve(A, ones)

    lam = (ones @ a_xty - 1.0) / (ones @ a_ones)
    beta = a_xty - lam * a_ones

    method = "ls-qr" if use_qr else "ls"
    return EstimateReport(
        p_hat=beta,
        method=method,
        negative_components=_negatives(beta),
        iterations=0,
        final_loglik=_loglik_or_nan(model, beta),
        groups=model.groups,
    )


def _forward_core(obs: np.ndarray, m: int, x_len: int):
    obs = np.asarray(obs, dtype=np.float64)
    if m < 1:
        raise ValidationError("noise support size m must be >= 1")
    if x_len < 2:
        raise ValidationError("x_len must be >= 2")
    if obs.shape != (x_len + m - 1,):
        raise ValidationError(
            f"untruncated uniform-noise masking of {x_len} classes has "
            f"{x_len + m - 1} masked classes; got {obs.shape[0]}"
        )
    total = obs.sum()
    if total <= 0:
        raise ValidationError("observed total must be positive")
    r = obs / total

    p = np.empty(x_len)
    p[0] = m * r[0]
    for j in range(1, x_len - 1):
        p[j] = m * (r[j] - r[j - 1])
    p[x_len - 1] = 1.0 - p[: x_len - 1].sum()

    warnings: List[str] = []
    if x_len - 2 > m - 1:
        warnings.append(
            f"difference window overlaps for components {m}..{x_len - 2}: "
            f"component j there estimates p[j] - p[j-{m}], not p[j]"
        )
    return p, warnings


def mle_forward(obs: np.ndarray, m: int, x_len: int) -> EstimateReport:
    """Difference estimator anchored at the bottom of the support.

    With r the empirical masked PMF of an untruncated uniform-noise masking
    over m noise values: ``p[0] = m*r[0]``, ``p[j] = m*(r[j] - r[j-1])`` for
    the middle components, and the last component takes the leftover mass.
    """
    p, warnings = _forward_core(obs, m, x_len)
    return EstimateReport(
        p_hat=p,
        method="mle-forward",
        negative_components=_negatives(p),
        iterations=0,
        final_loglik=float("nan"),
        warnings=tuple(warnings),
    )


def mle_backward(obs: np.ndarray, m: int, x_len: int) -> EstimateReport:
    """Mirror image of :func:`mle_forward` from the top of the support.

    Equivalent to reversing the masked histogram, running the forward
    estimator, and reversing the result, so ``p[-1] = m*r[-1]`` anchors it.
    """
    obs = np.asarray(obs, dtype=np.float64)
    p_rev, warnings = _forward_core(obs[::-1], m, x_len)
    p = p_rev[::-1].copy()
    return EstimateReport(
        p_hat=p,
        method="mle-backward",
        negative_components=_negatives(p),
        iterations=0,
        final_loglik=float("nan"),
        warnings=tuple(warnings),
    )


def mle_combined(obs: np.ndarray, m: int, x_len: int) -> EstimateReport:
    """Pick forward estimates on rising stretches of the masked histogram and
    backward estimates on falling ones, then renormalize to sum one.

    Component j uses the forward value when ``obs[j] >= obs[j-1]`` (plateaus
    count as rising; component 0 is always forward).  The rule presumes a
    unimodal masked histogram; when the rise/fall pattern switches direction
    more than once a warning is recorded.
    """
    obs = np.asarray(obs, dtype=np.float64)
    fwd = mle_forward(obs, m, x_len)
    bwd = mle_backward(obs, m, x_len)

    rising = np.empty(x_len, dtype=bool)
    rising[0] = True
    for j in range(1, x_len):
        rising[j] = obs[j] >= obs[j - 1]
    p = np.where(rising, fwd.p_hat, bwd.p_hat)

    warnings = list(dict.fromkeys(fwd.warnings + bwd.warnings))
    switches = int(np.sum(rising[1:] != rising[:-1]))
    if switches > 1:
        warnings.append(
            "masked histogram rises and falls more than once; the "
            "combined-rule preconditions fail"
        )

    total = p.sum()
    if abs(total) < 1e-12:
        raise ValidationError("combined estimate has zero total mass")
    p = p / total
    return EstimateReport(
        p_hat=p,
        method="mle-combined",
        negative_components=_negatives(p),
        iterations=0,
        final_loglik=float("nan"),
        warnings=tuple(warnings),
    )


def coordinate_mle(
    model: LikelihoodModel,
    init: Optional[np.ndarray] = None,
    grid: int = 1000,
    max_epochs: int = 500,
    tol: float = 1e-8,
    record_trace: bool = False,
) -> EstimateReport:
    """Constrained maximum likelihood by coordinate-pair grid search.

    Starting from ``init`` (default: uniform), sweep adjacent pairs
    i = 0..x_len-2 in ascending order.  For each pair with mass
    s = p[i] + p[i+1], evaluate the splits ``p[i] = s*j/grid`` for
    j = 0..grid and adopt the best strictly-improving one (ties keep the
    smallest j; otherwise the current values stand).  Sweeps repeat until an
    epoch improves the log-likelihood by less than ``tol`` or ``max_epochs``
    is reached.  Every iterate satisfies the simplex constraints, so the
    returned estimate never has negative components.
    """
    if grid < 2:
        raise ValidationError("grid must be >= 2")
    if max_epochs < 1:
        raise ValidationError("max_epochs must be >= 1")
    n = model.x_len
    if init is None:
        p = np.full(n, 1.0 / n)
        p[-1] = 1.0 - p[:-1].sum()
    else:
        p = np.asarray(init, dtype=np.float64).copy()
        if p.shape != (n,):
            raise ValidationError(f"init must have length {n}")
        if np.any(p < 0):
            raise ValidationError("init must be non-negative")
        if abs(p.sum() - 1.0) > PMF_TOL:
            raise ValidationError(f"init must sum to 1 within {PMF_TOL}")

    M = model.mixing.matrix
    obs = model.obs.astype(np.float64)
    ptr, rows, diff, w = _kernels.pair_structure(M, obs)
    pos_rows = np.flatnonzero(obs > 0).astype(np.int64)
    pos_w = obs[pos_rows]

    r = M @ p
    ll = _kernels_loglik(r, pos_rows, pos_w)
    trace_parts = []
    epochs = 0
    total_updates = 0

    for epoch in range(max_epochs):
        ll_before = ll
        updates, ll, trace, sum_err, min_p = _kernels.sweep_epoch(
            p, r, ptr, rows, diff, w, pos_rows, pos_w, grid, ll
        )
        epochs += 1
        total_updates += updates
        if record_trace:
            trace_parts.append(trace)
        if sum_err > 1e-9 or min_p < 0:
            raise AssertionError(
                f"simplex invariant violated in sweep: sum error {sum_err}, "
                f"min component {min_p}"
            )
        # refresh against float drift before measuring the epoch gain
        r = M @ p
        ll = _kernels_loglik(r, pos_rows, pos_w)
        if epoch == 0 and updates == 0 and np.isinf(ll):
            raise InfeasibleStartError(
                "infeasible start: every candidate has zero likelihood "
                "(use a strictly positive init)"
            )
        gain = ll - ll_before
        if np.isfinite(gain) and gain < tol:
            break

    return EstimateReport(
        p_hat=p,
        method="coord",
        negative_components=_negatives(p),
        iterations=epochs,
        final_loglik=ll,
        groups=model.groups,
        trace=np.concatenate(trace_parts) if trace_parts else None,
    )


def _kernels_loglik(r: np.ndarray, pos_rows: np.ndarray, pos_w: np.ndarray) -> float:
    rp = r[pos_rows]
    if np.any(rp <= 0.0):
        return -np.inf
    return float(pos_w @ np.log(rp))


def merge_classes(model: LikelihoodModel, i: int) -> LikelihoodModel:
    """Merge true-value classes i and i+1 into one estimation class.

    The merged column apportions the class mass equally over its constituent
    values (a weighted mean of the old columns), which keeps every column
    summing to one.  The merged class's values are recorded in ``groups`` so
    reports can unfold the bookkeeping.
    """
    n = model.x_len
    if n < 2:
        raise ValidationError("cannot merge classes of a single-class model")
    if not 0 <= i < n - 1:
        raise ValidationError(f"merge index {i} out of range")
    M = model.mixing.matrix
    sizes = np.array([len(g) for g in model.groups], dtype=np.float64)
    merged_col = (M[:, i] * sizes[i] + M[:, i + 1] * sizes[i + 1]) / (
        sizes[i] + sizes[i + 1]
    )
    new_M = np.hstack([M[:, :i], merged_col[:, None], M[:, i + 2 :]])
    new_groups = (
        model.groups[:i]
        + (model.groups[i] + model.groups[i + 1],)
        + model.groups[i + 2 :]
    )
    new_x = np.array([g[0] for g in new_groups], dtype=np.int64)
    mix = MixingMatrix(
        new_M, new_x, model.mixing.z_values, model.mixing.truncation_at
    )
    return LikelihoodModel(mix, model.obs, new_groups)
