"""Turn grouped published histograms into per-value histograms.

Census-style tables report some classes as value ranges and leave the top
class open-ended.  ``split_grouped`` apportions each group's count over its
member values proportionally to a Poisson reference distribution, rounding
with the largest-remainder rule so every group's total is conserved exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .core import Histogram
from .errors import ValidationError


@dataclass(frozen=True)
class GroupedClass:
    """A published class: the value range [start, end] (end None = open) and
    its count."""

    start: int
    end: Optional[int]
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ValidationError("group counts must be non-negative")
        if self.end is not None and self.end < self.start:
            raise ValidationError(f"group range ({self.start}, {self.end}) is empty")


def split_grouped(
    groups: Sequence[GroupedClass],
    poisson_mean: float,
    cap: Optional[int] = None,
) -> Histogram:
    """Distribute grouped counts over per-value cells.

    Each group's count is split over its member values proportionally to the
    Poisson(poisson_mean) PMF restricted to those values; the open top class
    uses the window [start, cap] with the Poisson tail renormalized onto it.
    ``cap`` defaults to the open class start plus three Poisson means,
    rounded up.  Largest-remainder rounding keeps integer counts with exact
    per-group totals.
    """
    if not groups:
        raise ValidationError("no groups given")
    if poisson_mean <= 0:
        raise ValidationError("poisson_mean must be positive")
    ordered = sorted(groups, key=lambda g: g.start)
    for a, b in zip(ordered, ordered[1:]):
        a_end = a.end if a.end is not None else math.inf
        if a.end is None:
            raise ValidationError("only the last class may be open-ended")
        if b.start <= a_end:
            raise ValidationError(
                f"group ranges overlap or are unordered near value {b.start}"
            )

    open_group = ordered[-1] if ordered[-1].end is None else None
    if open_group is not None:
        if cap is None:
            cap = open_group.start + math.ceil(3 * poisson_mean)
        if cap < open_group.start:
            raise ValidationError("cap must be at or above the open class start")
        top = cap
    else:
        top = ordered[-1].end
        if cap is not None and cap > top:
            top = cap

    lo = ordered[0].start
    counts = np.zeros(top - lo + 1, dtype=np.int64)
    for g in ordered:
        end = g.end if g.end is not None else cap
        values = np.arange(g.start, end + 1)
        weights = stats.poisson.pmf(values, poisson_mean)
        wsum = weights.sum()
        if wsum <= 0:
            raise ValidationError(
                f"Poisson({poisson_mean}) has no mass on values "
                f"[{g.start}, {end}]; cannot apportion"
            )
        counts[values - lo] += _largest_remainder(g.count, weights / wsum)
    return Histogram(lo, counts)


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    """Round ``total * weights`` to integers summing exactly to ``total``."""
    quotas = total * weights
    floors = np.floor(quotas).astype(np.int64)
    leftover = total - int(floors.sum())
    if leftover > 0:
        remainders = quotas - floors
        # ties broken toward lower values for determinism
        order = np.lexsort((np.arange(len(weights)), -remainders))
        floors[order[:leftover]] += 1
    return floors
