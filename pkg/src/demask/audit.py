"""Disclosure-risk audit by counting noise-assignment matrices.

The audit matrix has one row per true class and one column per noise value;
cell (i, j) counts the individuals of class i that drew noise value j.
Because the masked value is x + y, the observed masked counts fix the
anti-diagonal sums of this matrix.  The probability that the true class
counts are exactly ``x_counts`` given the masked data is modelled as the
proportion of consistent matrices:

    P = #{matrices with row sums = x_counts and the observed anti-diagonal
          sums} / #{matrices with the observed anti-diagonal sums}

Counts are exact arbitrary-precision integers and the ratio an exact
rational; magnitudes shrink far below float underflow even for modest
instances, so a log10 value is reported alongside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from .errors import AuditCapError, ValidationError


@dataclass(frozen=True)
class AuditInstance:
    """Row sums (true class counts), anti-diagonal sums (masked counts), and
    the number of noise columns."""

    x_counts: Tuple[int, ...]
    z_counts: Tuple[int, ...]
    noise_size: int

    def __post_init__(self):
        x = tuple(int(v) for v in self.x_counts)
        z = tuple(int(v) for v in self.z_counts)
        if self.noise_size < 1:
            raise ValidationError("noise_size must be >= 1")
        if len(x) < 1:
            raise ValidationError("x_counts must be non-empty")
        if any(v < 0 for v in x) or any(v < 0 for v in z):
            raise ValidationError("counts must be non-negative")
        if len(z) != len(x) + self.noise_size - 1:
            raise ValidationError(
                f"z_counts must have {len(x) + self.noise_size - 1} "
                f"anti-diagonals, got {len(z)}"
            )
        if sum(x) != sum(z):
            raise ValidationError("x_counts and z_counts totals differ")
        object.__setattr__(self, "x_counts", x)
        object.__setattr__(self, "z_counts", z)

    @classmethod
    def from_matrix(cls, matrix) -> "AuditInstance":
        """Build the instance realized by a concrete assignment matrix."""
        a = np.asarray(matrix, dtype=np.int64)
        if a.ndim != 2:
            raise ValidationError("assignment matrix must be 2-d")
        n_rows, m = a.shape
        x = a.sum(axis=1)
        z = [
            int(sum(a[i, d - i] for i in range(max(0, d - m + 1), min(n_rows, d + 1))))
            for d in range(n_rows + m - 1)
        ]
        return cls(tuple(x.tolist()), tuple(z), m)

    @property
    def n_classes(self) -> int:
        return len(self.x_counts)

    @property
    def total(self) -> int:
        return sum(self.x_counts)

    def diagonal_cells(self, d: int) -> range:
        """Row indices of the cells on anti-diagonal d."""
        return range(max(0, d - self.noise_size + 1), min(self.n_classes, d + 1))


def count_matrices(
    instance: AuditInstance,
    fix_rows: bool,
    max_states: int = 2_000_000,
) -> int:
    """Number of non-negative integer matrices matching the instance.

    With ``fix_rows`` both the row sums and the anti-diagonal sums are
    constrained (dynamic programming over anti-diagonals, memoizing the
    remaining row budgets).  Without it only the anti-diagonal sums are
    fixed; the diagonals are then independent and each contributes a
    stars-and-bars factor.
    """
    if not fix_rows:
        total = 1
        for d, z in enumerate(instance.z_counts):
            cells = len(instance.diagonal_cells(d))
            total *= math.comb(z + cells - 1, cells - 1)
        return total

    n_diag = len(instance.z_counts)
    memo = {}

    def rec(d: int, remaining: Tuple[int, ...]) -> int:
        if d == n_diag:
            return 1 if all(v == 0 for v in remaining) else 0
        # rows that can never receive mass again must be exhausted
        first_row = max(0, d - instance.noise_size + 1)
        if any(remaining[i] != 0 for i in range(first_row)):
            return 0
        key = (d, remaining)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if len(memo) >= max_states:
            raise AuditCapError(
                f"exact audit exceeded {max_states} memoized states; "
                "use monte_carlo_audit for instances of this size"
            )
        rows = list(instance.diagonal_cells(d))
        z = instance.z_counts[d]

        def place(idx: int, left: int, rem: Tuple[int, ...]) -> int:
            if idx == len(rows) - 1:
                i = rows[idx]
                if left <= rem[i]:
                    nxt = list(rem)
                    nxt[i] -= left
                    return rec(d + 1, tuple(nxt))
                return 0
            i = rows[idx]
            acc = 0
            for a in range(min(left, rem[i]) + 1):
                nxt = list(rem)
                nxt[i] -= a
                acc += place(idx + 1, left - a, tuple(nxt))
            return acc

        if not rows:
            result = rec(d + 1, remaining) if z == 0 else 0
        else:
            result = place(0, z, remaining)
        memo[key] = result
        return result

    return rec(0, tuple(instance.x_counts))


@dataclass(frozen=True)
class AuditResult:
    """Exact audit outcome: both counts, the reduced ratio, and its log10."""

    numerator: int
    denominator: int
    probability: float
    log10_probability: float

    @property
    def exact(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)


def conditional_probability(
    instance: AuditInstance, max_states: int = 2_000_000
) -> AuditResult:
    """P(true class counts | masked counts) under the uniform-matrix model.

    Exact rational ``count(fix_rows) / count(free rows)``; tiny magnitudes
    are reported through ``log10_probability`` since the float value
    underflows quickly.
    """
    num = count_matrices(instance, fix_rows=True, max_states=max_states)
    den = count_matrices(instance, fix_rows=False, max_states=max_states)
    if num == 0:
        raise ValidationError(
            "no matrix matches both margins; instance is infeasible"
        )
    frac = Fraction(num, den)
    return AuditResult(
        numerator=num,
        denominator=den,
        probability=float(frac),
        log10_probability=math.log10(num) - math.log10(den),
    )


@dataclass(frozen=True)
class MonteCarloAudit:
    estimate: float
    std_error: float
    samples: int
    hits: int
    warnings: Tuple[str, ...] = ()


def monte_carlo_audit(
    instance: AuditInstance, samples: int, seed: int
) -> MonteCarloAudit:
    """Estimate the same ratio by uniform sampling of the denominator set.

    Each anti-diagonal's composition is drawn uniformly and independently
    (that is exactly the uniform distribution over matrices with the observed
    anti-diagonal sums), so the plain proportion of samples whose row sums
    match ``x_counts`` is unbiased and needs no reweighting.
    """
    if samples < 1:
        raise ValidationError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    x = np.asarray(instance.x_counts, dtype=np.int64)
    n_classes = instance.n_classes

    hits = 0
    rows_per_diag = [list(instance.diagonal_cells(d)) for d in range(len(instance.z_counts))]
    for _ in range(samples):
        sums = np.zeros(n_classes, dtype=np.int64)
        for d, z in enumerate(instance.z_counts):
            rows = rows_per_diag[d]
            parts = _uniform_composition(rng, z, len(rows))
            for i, a in zip(rows, parts):
                sums[i] += a
        if np.array_equal(sums, x):
            hits += 1

    estimate = hits / samples
    warnings: Tuple[str, ...] = ()
    if samples < 2:
        std_error = float("nan")
        warnings = ("standard error undefined for a single sample",)
    else:
        std_error = math.sqrt(estimate * (1.0 - estimate) / (samples - 1))
    return MonteCarloAudit(
        estimate=estimate,
        std_error=std_error,
        samples=samples,
        hits=hits,
        warnings=warnings,
    )


def _uniform_composition(rng: np.random.Generator, total: int, parts: int):
    """Uniform draw among the C(total+parts-1, parts-1) compositions."""
    if parts == 1:
        return [total]
    if total == 0:
        return [0] * parts
    bars = np.sort(rng.choice(total + parts - 1, size=parts - 1, replace=False))
    out = []
    prev = -1
    for b in bars:
        out.append(int(b - prev - 1))
        prev = b
    out.append(int(total + parts - 1 - prev - 1))
    return out
