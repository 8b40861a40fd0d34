"""The masked-data log-likelihood and its reparameterizations.

The central object is :class:`LikelihoodModel`: a mixing matrix M, observed
masked counts aligned to its rows (tail bucket last when truncated), and the
number of true-PMF components.  ``loglik`` evaluates

    l(p) = sum_k obs[k] * log((M p)_k)

with the conventions 0*log(0) = 0 and l = -inf (a sentinel, not an
exception) whenever a positive count meets zero predicted probability, so
search procedures can reject infeasible candidates uniformly.

The likelihood is expressed on the probability scale.  Formulations that
multiply every row of M by a constant c (the noise-count scale some
derivations use) shift l by ``total_count * log(c)`` and therefore share the
same maximizer.

Also here: the nested logistic transform that maps unconstrained reals to a
strictly increasing sequence in (0, 1), and the analytic gradient of the
associated cumulative-probability likelihood.  Both exist for validation;
solving the resulting stationarity system is deliberately out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import Histogram, MixingMatrix, ObfuscationScheme, build_mixing_matrix
from .errors import ValidationError
from .obfuscate import PublishedDataset

PMF_TOL = 1e-9


@dataclass(frozen=True)
class LikelihoodModel:
    """Mixing matrix plus the observed masked counts its rows explain.

    ``groups[i]`` lists the true values merged into column i; unmerged models
    have one value per column.
    """

    mixing: MixingMatrix
    obs: np.ndarray
    groups: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        obs = np.asarray(self.obs)
        if obs.ndim != 1 or obs.shape[0] != self.mixing.n_rows:
            raise ValidationError(
                f"obs must have one entry per matrix row "
                f"({self.mixing.n_rows}), got shape {obs.shape}"
            )
        if np.any(obs < 0):
            raise ValidationError("observed counts must be non-negative")
        obs = obs.astype(np.int64)
        if obs.sum() < 1:
            raise ValidationError("observed total must be >= 1")
        if len(self.groups) != self.mixing.n_cols:
            raise ValidationError("groups must have one entry per matrix column")
        out = np.array(obs)
        out.setflags(write=False)
        object.__setattr__(self, "obs", out)
        object.__setattr__(
            self, "groups", tuple(tuple(int(v) for v in g) for g in self.groups)
        )

    @property
    def x_len(self) -> int:
        return self.mixing.n_cols

    @property
    def total(self) -> int:
        return int(self.obs.sum())


def model_from_published(pub: PublishedDataset) -> LikelihoodModel:
    """Build the likelihood model an analyst can legally form from a bundle."""
    scheme = ObfuscationScheme(noise=pub.noise, truncation_at=pub.truncation_at)
    mix = build_mixing_matrix(pub.declared_support, scheme)
    obs = align_observations(mix, pub.histogram)
    groups = tuple((int(v),) for v in mix.x_values)
    return LikelihoodModel(mix, obs, groups)


def align_observations(mix: MixingMatrix, hist: Histogram) -> np.ndarray:
    """Map histogram counts onto mixing-matrix rows (tail bucket last).

    Works for truncated and untruncated histograms alike: the tail row
    receives the total count at values >= the threshold.  Counts at values
    the matrix cannot produce are an error.
    """
    obs = np.zeros(mix.n_rows, dtype=np.int64)
    by_value = dict(zip(hist.support.tolist(), hist.counts.tolist()))
    if mix.truncated:
        t = mix.truncation_at
        plain = mix.z_values[:-1]
        for k, z in enumerate(plain.tolist()):
            obs[k] = by_value.pop(z, 0)
        tail = sum(c for v, c in by_value.items() if v >= t)
        leftovers = {v: c for v, c in by_value.items() if v < t and c > 0}
        obs[-1] = tail
    else:
        for k, z in enumerate(mix.z_values.tolist()):
            obs[k] = by_value.pop(z, 0)
        leftovers = {v: c for v, c in by_value.items() if c > 0}
    if leftovers:
        raise ValidationError(
            f"observed masked values outside the model range: {sorted(leftovers)}"
        )
    return obs


def _loglik_terms(obs: np.ndarray, r: np.ndarray) -> float:
    pos = obs > 0
    rp = r[pos]
    if np.any(rp <= 0.0):
        return -np.inf
    return float(obs[pos] @ np.log(rp))


def loglik(model: LikelihoodModel, p: np.ndarray) -> float:
    """Log-likelihood of the true PMF ``p`` under the model.

    ``p`` must be a simplex vector of length ``x_len``; returns -inf when a
    positively-observed class has zero predicted probability.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (model.x_len,):
        raise ValidationError(
            f"expected p of length {model.x_len}, got shape {p.shape}"
        )
    if np.any(p < 0):
        raise ValidationError("p must be non-negative")
    if abs(p.sum() - 1.0) > PMF_TOL:
        raise ValidationError(f"p must sum to 1 within {PMF_TOL}")
    r = model.mixing.matrix @ p
    return _loglik_terms(model.obs, r)


def loglik_delta(
    model: LikelihoodModel,
    p: np.ndarray,
    i: int,
    new_pi: float,
    new_pi1: float,
) -> float:
    """Log-likelihood after replacing (p[i], p[i+1]) by (new_pi, new_pi1).

    Only the rows where columns i or i+1 are nonzero are recomputed; mass
    must be conserved by the replacement.  Agrees with a full re-evaluation
    to 1e-10.
    """
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= i < model.x_len - 1:
        raise ValidationError(f"pair index {i} out of range")
    if p.shape != (model.x_len,):
        raise ValidationError(
            f"expected p of length {model.x_len}, got shape {p.shape}"
        )
    if new_pi < 0 or new_pi1 < 0:
        raise ValidationError("pair values must be non-negative")
    if abs((new_pi + new_pi1) - (p[i] + p[i + 1])) > PMF_TOL:
        raise ValidationError("pair replacement must conserve mass")
    M = model.mixing.matrix
    r = M @ p
    affected = np.flatnonzero((M[:, i] != 0) | (M[:, i + 1] != 0))
    r2 = r.copy()
    r2[affected] += (new_pi - p[i]) * M[affected, i]
    r2[affected] += (new_pi1 - p[i + 1]) * M[affected, i + 1]
    return _loglik_terms(model.obs, r2)


def nested_logistic(u: np.ndarray) -> np.ndarray:
    """Map unconstrained reals to a strictly increasing sequence in (0, 1).

    r_k = 1 / (1 + sum_{i>=k} exp(-u_i)), computed through log-space suffix
    sums so extreme inputs cannot overflow.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or u.size == 0:
        raise ValidationError("u must be a non-empty 1-d array")
    log_suffix = np.logaddexp.accumulate((-u)[::-1])[::-1]
    return np.exp(-np.logaddexp(0.0, log_suffix))


def cumulative_loglik(counts: np.ndarray, u: np.ndarray) -> float:
    """Likelihood whose gradient ``nested_logistic_loglik_grad`` computes.

    ``counts`` has length n+1: counts[0] pairs with the residual class
    (probability 1 - sum_j r_j) and counts[1..n] with r_1..r_n, where
    r = nested_logistic(u).  Used as the finite-difference oracle target.
    """
    counts = np.asarray(counts, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if counts.shape[0] != u.shape[0] + 1:
        raise ValidationError("counts must have one more entry than u")
    r = nested_logistic(u)
    probs = np.concatenate([[1.0 - r.sum()], r])
    pos = counts > 0
    if np.any(probs[pos] <= 0.0):
        return -np.inf
    return float(counts[pos] @ np.log(probs[pos]))


def nested_logistic_loglik_grad(counts: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Analytic gradient d l / d u_k of :func:`cumulative_loglik`.

    For each k:

        dl/du_k = exp(-u_k) * ( sum_{j<=k} counts[j] r_j
                                - counts[0] * sum_{j<=k} r_j^2 / (1 - sum_j r_j) )
    """
    counts = np.asarray(counts, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if counts.shape[0] != u.shape[0] + 1:
        raise ValidationError("counts must have one more entry than u")
    r = nested_logistic(u)
    residual = 1.0 - r.sum()
    a = np.cumsum(r * r)
    b = np.cumsum(counts[1:] * r)
    return np.exp(-u) * (b - counts[0] * a / residual)
