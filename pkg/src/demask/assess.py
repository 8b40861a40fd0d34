"""Parametric bootstrap: per-component variance and MSE of an estimator.

Replicate b samples n masked observations from M @ p_hat, re-estimates, and
the spread of the replicate estimates measures the estimator's sampling
error.  MSE is taken against ``p_hat`` -- the truth of the bootstrap world;
when the caller also supplies the real truth, an ``mse_true`` vector is
reported as well.

Replicate seeds are spawned deterministically from the master seed, so runs
are reproducible and replicates could be evaluated in parallel without
changing any number.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DemaskError, ValidationError
from .estimators import (
    coordinate_mle,
    ls_constrained,
    mle_backward,
    mle_combined,
    mle_forward,
)
from .likelihood import LikelihoodModel

PMF_TOL = 1e-9

EstimatorFn = Callable[[LikelihoodModel, np.ndarray], np.ndarray]


def make_estimator(
    tag: str,
    noise_size: Optional[int] = None,
    **options,
) -> EstimatorFn:
    """Resolve an estimator tag to a ``(model, obs) -> p_hat`` callable.

    The difference estimators need the noise support size, which is not part
    of the likelihood model; pass ``noise_size`` for those tags.  Extra
    keyword options are forwarded (e.g. ``grid``/``tol`` for ``coord``).
    """
    if tag == "multinomial":
        def f(model, obs):
            return obs / obs.sum()
        return f
    if tag in ("ls", "ls-qr"):
        def f(model, obs):
            return ls_constrained(model, obs, use_qr=(tag == "ls-qr")).p_hat
        return f
    if tag in ("mle-fwd", "mle-bwd", "mle-combined"):
        if noise_size is None:
            raise ValidationError(f"estimator {tag!r} needs noise_size")
        fn = {
            "mle-fwd": mle_forward,
            "mle-bwd": mle_backward,
            "mle-combined": mle_combined,
        }[tag]

        def f(model, obs):
            return fn(obs, noise_size, model.x_len).p_hat
        return f
    if tag == "coord":
        def f(model, obs):
            rep_model = LikelihoodModel(model.mixing, obs, model.groups)
            return coordinate_mle(rep_model, **options).p_hat
        return f
    raise ValidationError(f"unknown estimator tag {tag!r}")


@dataclass(frozen=True)
class BootstrapReport:
    variance: np.ndarray
    mse: np.ndarray
    replicates: int
    failed: int
    mean: np.ndarray
    mse_true: Optional[np.ndarray] = None


def bootstrap(
    model: LikelihoodModel,
    p_hat: np.ndarray,
    n: int,
    B: int,
    estimator: Union[str, EstimatorFn],
    seed: int,
    true_p: Optional[np.ndarray] = None,
    estimator_options: Optional[dict] = None,
    noise_size: Optional[int] = None,
    replicate_seeds: Optional[Sequence[int]] = None,
) -> BootstrapReport:
    """Parametric bootstrap of ``estimator`` around the fitted ``p_hat``.

    For b = 1..B: draw n masked observations from M @ p_hat, re-estimate,
    and accumulate.  ``variance[i]`` is the sample variance (ddof=1) of the
    replicate estimates of component i and ``mse[i]`` their mean squared
    deviation from ``p_hat[i]``.  Replicates whose estimator raises are
    excluded and counted in ``failed`` rather than aborting the run.

    ``replicate_seeds`` overrides the derived per-replicate seeds (mainly
    for tests that need to force degenerate configurations).
    """
    p_hat = np.asarray(p_hat, dtype=np.float64)
    if p_hat.shape != (model.x_len,):
        raise ValidationError(f"p_hat must have length {model.x_len}")
    if np.any(p_hat < 0) or abs(p_hat.sum() - 1.0) > PMF_TOL:
        raise ValidationError("p_hat must lie on the simplex")
    if B < 2:
        raise ValidationError("B must be >= 2")
    if n < 1:
        raise ValidationError("n must be >= 1")

    fn = (
        make_estimator(estimator, noise_size=noise_size, **(estimator_options or {}))
        if isinstance(estimator, str)
        else estimator
    )

    r = model.mixing.matrix @ p_hat
    r = r / r.sum()

    if replicate_seeds is None:
        replicate_seeds = np.random.SeedSequence(seed).spawn(B)
    elif len(replicate_seeds) != B:
        raise ValidationError("replicate_seeds must have length B")

    estimates = []
    failed = 0
    for rep_seed in replicate_seeds:
        rng = np.random.default_rng(rep_seed)
        obs = rng.multinomial(n, r)
        try:
            estimates.append(np.asarray(fn(model, obs), dtype=np.float64))
        except DemaskError:
            failed += 1
    if len(estimates) < 2:
        raise ValidationError(
            f"only {len(estimates)} replicates succeeded; cannot estimate variance"
        )

    est = np.vstack(estimates)
    variance = est.var(axis=0, ddof=1)
    mse = ((est - p_hat) ** 2).mean(axis=0)
    mse_true = None
    if true_p is not None:
        true_p = np.asarray(true_p, dtype=np.float64)
        if true_p.shape != p_hat.shape:
            raise ValidationError("true_p must match p_hat's length")
        mse_true = ((est - true_p) ** 2).mean(axis=0)
    return BootstrapReport(
        variance=variance,
        mse=mse,
        replicates=len(estimates),
        failed=failed,
        mean=est.mean(axis=0),
        mse_true=mse_true,
    )
