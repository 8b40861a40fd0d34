"""Quantiles and extremum estimation from a (recovered) PMF, plus the
repeated-noise range estimator that demonstrably fails."""

from __future__ import annotations

import numpy as np

from .core import Histogram, NoiseSpec, Pmf, cdf
from .errors import ValidationError

CDF_TOL = 1e-12


def quantile(p: Pmf, q: float) -> int:
    """Smallest support value whose CDF reaches q (within a 1e-12 slack).

    Matches the order-statistic quantile of the underlying data when ``p``
    is that data's exact PMF.
    """
    if not 0.0 < q <= 1.0:
        raise ValidationError(f"quantile level must be in (0, 1]; got {q}")
    c = cdf(p)
    idx = int(np.searchsorted(c, q - CDF_TOL, side="left"))
    idx = min(idx, len(c) - 1)
    return p.support_min + idx


def estimate_max(p: Pmf, eps: float = 1e-9) -> int:
    """Smallest support value with CDF >= 1 - eps.

    Floating-point estimates rarely carry a CDF that hits 1 exactly, so the
    top of the distribution is read off at 1 - eps; shrinking eps can only
    move the answer up.
    """
    if eps < 0:
        raise ValidationError("eps must be non-negative")
    c = cdf(p)
    idx = int(np.searchsorted(c, 1.0 - eps, side="left"))
    idx = min(idx, len(c) - 1)
    return p.support_min + idx


def lln_max_estimate(
    masked: Histogram,
    noise: NoiseSpec,
    extra_rounds: int = 999,
    seed: int = 0,
) -> float:
    """Estimate max(X) by piling on noise and subtracting its expectation.

    Each individual, already masked once, receives ``extra_rounds`` further
    independent draws of the same noise; the estimate is
    ``max(W1) - (extra_rounds + 1) * mean(noise)``.  The per-individual total
    of the extra draws is sampled from the exact ``extra_rounds``-fold
    convolution of the noise PMF, which has the identical distribution to
    summing the draws one by one and keeps the whole computation fast and
    deterministic given the seed.

    The estimator is included because it fails: the maximum of the
    accumulated noise grows with the number of rounds, so the estimate
    drifts far above the true maximum.
    """
    if extra_rounds < 1:
        raise ValidationError("extra_rounds must be >= 1")
    rng = np.random.default_rng(seed)

    # extra_rounds-fold convolution of the noise PMF by binary powering
    probs = noise.pmf.probs
    result = None
    base = probs
    k = extra_rounds
    while k:
        if k & 1:
            result = base if result is None else np.convolve(result, base)
            result = result / result.sum()
        k >>= 1
        if k:
            base = np.convolve(base, base)
            base = base / base.sum()

    z = masked.values()
    u = rng.random(z.size)
    sums_cdf = np.cumsum(result)
    extra = np.searchsorted(sums_cdf, u, side="right")
    extra = np.minimum(extra, len(result) - 1)
    w1_max = float(np.max(z + extra_rounds * noise.pmf.support_min + extra))
    return w1_max - (extra_rounds + 1) * noise.mean
