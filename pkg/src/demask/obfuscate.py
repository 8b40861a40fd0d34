"""Masking pipeline: add per-individual noise, truncate the upper tail, and
bundle exactly the information an estimator is allowed to see."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import Histogram, NoiseSpec, ObfuscationScheme
from .errors import ValidationError


@dataclass(frozen=True)
class PublishedDataset:
    """The published bundle: truncated masked histogram plus metadata.

    ``declared_support`` is the X-range announced to analysts (possibly wider
    than the truth); ``truncation_at`` is the tail bucket threshold, if any.
    Downstream estimators may use nothing beyond these fields.
    """

    histogram: Histogram
    noise: NoiseSpec
    declared_support: Tuple[int, int]
    truncation_at: Optional[int] = None


def mask(raw: Histogram, scheme: ObfuscationScheme, seed: int) -> Histogram:
    """Publish each individual at x + y with y drawn i.i.d. from the noise.

    The output support is the full convolution support (raw plus noise
    range), with explicit zeros, so the masked histogram always aligns with
    the mixing matrix regardless of which values were actually hit.
    """
    rng = np.random.default_rng(seed)
    q = scheme.noise.pmf
    values = raw.values()
    noise = rng.choice(np.arange(q.support_min, q.support_max + 1),
                       size=values.size, p=q.probs)
    z = values + noise
    z_lo = raw.support_min + q.support_min
    z_hi = raw.support_max + q.support_max
    counts = np.bincount(z - z_lo, minlength=z_hi - z_lo + 1)
    return Histogram(z_lo, counts)


def truncate(masked: Histogram, t: int) -> Histogram:
    """Collapse every count at values >= t into a single bucket published as t.

    A threshold above the support maximum leaves the histogram unchanged;
    one below the support minimum is an error.
    """
    t = int(t)
    if t < masked.support_min:
        raise ValidationError(
            f"truncation threshold {t} is below the support minimum "
            f"{masked.support_min}"
        )
    if t >= masked.support_max:
        return masked
    keep = t - masked.support_min
    counts = np.concatenate([masked.counts[:keep],
                             [masked.counts[keep:].sum()]])
    return Histogram(masked.support_min, counts)


def publish(masked: Histogram, scheme: ObfuscationScheme) -> PublishedDataset:
    """Apply the scheme's truncation and attach the published metadata.

    ``masked`` must be an untruncated mask() output, whose support endpoints
    encode the true X-range exactly (the mask support is structural, not
    data-dependent).  Fails if a declared support does not cover the truth.
    """
    q = scheme.noise.pmf
    x_lo = masked.support_min - q.support_min
    x_hi = masked.support_max - q.support_max
    if x_hi < x_lo:
        raise ValidationError("masked histogram is narrower than the noise support")
    declared = scheme.declared_support or (x_lo, x_hi)
    if not (declared[0] <= x_lo and x_hi <= declared[1]):
        raise ValidationError("declared support does not cover the true X-support")
    hist = masked
    if scheme.truncation_at is not None:
        hist = truncate(masked, scheme.truncation_at)
    return PublishedDataset(
        histogram=hist,
        noise=scheme.noise,
        declared_support=declared,
        truncation_at=scheme.truncation_at,
    )
