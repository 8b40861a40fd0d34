"""Foundational types: histograms, PMFs on integer supports, noise
specifications, and the mixing matrix that links a true distribution to its
masked counterpart.

All containers are frozen dataclasses holding read-only numpy arrays, so
instances can be shared freely across threads.  Operations are pure
functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import ValidationError

PMF_TOL = 1e-9


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Histogram:
    """Counts on a contiguous integer support.

    ``counts[i]`` is the number of observations equal to ``support_min + i``.
    Interior zero counts are kept; they are meaningful to the estimators.
    """

    support_min: int
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size == 0:
            raise ValidationError("counts must be a non-empty 1-d array")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.floor(counts)):
                raise ValidationError("counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValidationError("counts must be non-negative")
        if counts.sum() < 1:
            raise ValidationError("empty data: histogram total must be >= 1")
        object.__setattr__(self, "support_min", int(self.support_min))
        object.__setattr__(self, "counts", _readonly(counts))

    @property
    def support_max(self) -> int:
        return self.support_min + len(self.counts) - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_min, self.support_max + 1)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def values(self) -> np.ndarray:
        """Expand to one entry per individual (ascending)."""
        return np.repeat(self.support, self.counts)


@dataclass(frozen=True)
class Pmf:
    """Probability vector on a contiguous integer support.

    Probabilities must be non-negative and sum to one within ``PMF_TOL``;
    inputs outside that tolerance are rejected, never renormalized silently.
    """

    support_min: int
    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValidationError("probs must be a non-empty 1-d array")
        if np.any(probs < 0):
            raise ValidationError("probabilities must be non-negative")
        total = probs.sum()
        if abs(total - 1.0) > PMF_TOL:
            raise ValidationError(
                f"probabilities must sum to 1 within {PMF_TOL}; got {total!r}"
            )
        object.__setattr__(self, "support_min", int(self.support_min))
        object.__setattr__(self, "probs", _readonly(probs))

    @property
    def support_max(self) -> int:
        return self.support_min + len(self.probs) - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.support_min, self.support_max + 1)

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise distribution on a finite integer support."""

    pmf: Pmf

    @classmethod
    def uniform(cls, a: int, b: int) -> "NoiseSpec":
        """Discrete uniform on the inclusive range {a, ..., b} (m = b-a+1 values)."""
        if b < a:
            raise ValidationError("uniform noise needs a <= b")
        m = b - a + 1
        return cls(Pmf(a, np.full(m, 1.0 / m)))

    @classmethod
    def point_mass(cls, c: int) -> "NoiseSpec":
        return cls(Pmf(c, np.ones(1)))

    @property
    def support_min(self) -> int:
        return self.pmf.support_min

    @property
    def support_max(self) -> int:
        return self.pmf.support_max

    @property
    def size(self) -> int:
        return len(self.pmf.probs)

    @property
    def mean(self) -> float:
        return self.pmf.mean


@dataclass(frozen=True)
class ObfuscationScheme:
    """How a raw histogram is published: noise, optional upper-tail
    truncation, and an optional declared (widened) support.

    ``truncation_at = t`` collapses every masked value >= t into one bucket
    published as t.  ``declared_support`` overrides the true X-support in the
    published metadata and must contain it.
    """

    noise: NoiseSpec
    truncation_at: Optional[int] = None
    declared_support: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.declared_support is not None:
            lo, hi = self.declared_support
            if hi < lo:
                raise ValidationError("declared_support range is empty")
            object.__setattr__(self, "declared_support", (int(lo), int(hi)))
        if self.truncation_at is not None:
            object.__setattr__(self, "truncation_at", int(self.truncation_at))


@dataclass(frozen=True)
class MixingMatrix:
    """Linear map from the true PMF to the published masked PMF.

    Row k corresponds to published masked value ``z_values[k]``; when
    truncated the final row is the tail bucket (all z >= truncation_at) and
    its entries are the column sums of the collapsed rows.  Column i
    corresponds to true value ``x_values[i]``.  Every column sums to one.
    """

    matrix: np.ndarray
    x_values: np.ndarray
    z_values: np.ndarray
    truncation_at: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "matrix", _readonly(np.asarray(self.matrix, dtype=np.float64)))
        object.__setattr__(self, "x_values", _readonly(np.asarray(self.x_values, dtype=np.int64)))
        object.__setattr__(self, "z_values", _readonly(np.asarray(self.z_values, dtype=np.int64)))

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def truncated(self) -> bool:
        return self.truncation_at is not None

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Masked probabilities M @ p."""
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (self.n_cols,):
            raise ValidationError(
                f"expected p of length {self.n_cols}, got shape {p.shape}"
            )
        return self.matrix @ p


def pmf_from_histogram(h: Histogram) -> Pmf:
    """Empirical PMF: counts divided by the total count."""
    total = h.total
    if total < 1:
        raise ValidationError("empty data")
    return Pmf(h.support_min, h.counts / total)


def convolve(p: Pmf, q: Pmf) -> Pmf:
    """Distribution of the sum of independent draws from ``p`` and ``q``.

    The result lives on the Minkowski sum of the supports:
    ``len(p) + len(q) - 1`` values starting at ``p.support_min + q.support_min``.
    """
    probs = np.convolve(p.probs, q.probs)
    # np.convolve can leave the sum a few ulp off 1; steer it back inside the
    # validation tolerance without changing any entry meaningfully.
    probs = probs / probs.sum()
    return Pmf(p.support_min + q.support_min, probs)


def cdf(p: Pmf) -> np.ndarray:
    """Running sums of the PMF; the last entry is 1 within PMF_TOL."""
    return np.cumsum(p.probs)


def build_mixing_matrix(
    x_support: Tuple[int, int], scheme: ObfuscationScheme
) -> MixingMatrix:
    """Construct the mixing matrix for a given X-support and scheme.

    ``x_support`` is the inclusive (min, max) range of true values visible to
    the estimator -- the declared support when the scheme widens it.  With no
    truncation, rows cover every reachable masked value; with truncation at
    t, rows for z >= t are summed into one final tail row.
    """
    x_lo, x_hi = int(x_support[0]), int(x_support[1])
    if x_hi < x_lo:
        raise ValidationError("x_support range is empty")
    if scheme.declared_support is not None:
        d_lo, d_hi = scheme.declared_support
        if not (d_lo <= x_lo and x_hi <= d_hi):
            raise ValidationError(
                "declared support does not cover the true X-support"
            )
        # phantom columns for the declared-but-absent values
        x_lo, x_hi = d_lo, d_hi

    q = scheme.noise.pmf
    x_vals = np.arange(x_lo, x_hi + 1)
    z_lo = x_lo + q.support_min
    z_hi = x_hi + q.support_max
    z_vals = np.arange(z_lo, z_hi + 1)

    full = np.zeros((len(z_vals), len(x_vals)))
    for i, x in enumerate(x_vals):
        full[x + q.support_min - z_lo : x + q.support_max - z_lo + 1, i] = q.probs

    t = scheme.truncation_at
    if t is None:
        return MixingMatrix(full, x_vals, z_vals, None)

    if not (z_lo < t < z_hi):
        raise ValidationError(
            f"truncation threshold {t} must lie strictly inside the masked "
            f"support [{z_lo}, {z_hi}]"
        )
    keep = t - z_lo
    tail = full[keep:].sum(axis=0)
    matrix = np.vstack([full[:keep], tail])
    z_trunc = np.concatenate([z_vals[:keep], [t]])
    return MixingMatrix(matrix, x_vals, z_trunc, t)
