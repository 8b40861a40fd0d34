"""demask: additive-noise masking of discrete histograms and recovery of
distributional statistics (PMF, quantiles, extremum) from the masked data,
with a combinatorial disclosure audit and bootstrap error assessment."""

from .core import (
    Histogram,
    MixingMatrix,
    NoiseSpec,
    ObfuscationScheme,
    Pmf,
    build_mixing_matrix,
    cdf,
    convolve,
    pmf_from_histogram,
)
from .synth import GeneratorConfig, gen_poisson_mixture, sample_from_pmf
from .obfuscate import PublishedDataset, mask, publish, truncate
from .likelihood import (
    LikelihoodModel,
    align_observations,
    cumulative_loglik,
    loglik,
    loglik_delta,
    model_from_published,
    nested_logistic,
    nested_logistic_loglik_grad,
)
from .estimators import (
    EstimateReport,
    coordinate_mle,
    ls_constrained,
    merge_classes,
    mle_backward,
    mle_combined,
    mle_forward,
)
from .quantiles import estimate_max, lln_max_estimate, quantile
from .audit import (
    AuditInstance,
    AuditResult,
    MonteCarloAudit,
    conditional_probability,
    count_matrices,
    monte_carlo_audit,
)
from .assess import BootstrapReport, bootstrap, make_estimator
from .preprocess import GroupedClass, split_grouped
from .errors import (
    AuditCapError,
    DemaskError,
    InfeasibleStartError,
    RankDeficientError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "AuditCapError",
    "AuditInstance",
    "AuditResult",
    "BootstrapReport",
    "DemaskError",
    "EstimateReport",
    "GeneratorConfig",
    "GroupedClass",
    "Histogram",
    "InfeasibleStartError",
    "LikelihoodModel",
    "MixingMatrix",
    "MonteCarloAudit",
    "NoiseSpec",
    "ObfuscationScheme",
    "Pmf",
    "PublishedDataset",
    "RankDeficientError",
    "ValidationError",
    "align_observations",
    "bootstrap",
    "build_mixing_matrix",
    "cdf",
    "conditional_probability",
    "convolve",
    "coordinate_mle",
    "count_matrices",
    "cumulative_loglik",
    "estimate_max",
    "gen_poisson_mixture",
    "lln_max_estimate",
    "loglik",
    "loglik_delta",
    "ls_constrained",
    "make_estimator",
    "mask",
    "merge_classes",
    "mle_backward",
    "mle_combined",
    "mle_forward",
    "model_from_published",
    "monte_carlo_audit",
    "nested_logistic",
    "nested_logistic_loglik_grad",
    "pmf_from_histogram",
    "publish",
    "quantile",
    "sample_from_pmf",
    "split_grouped",
    "truncate",
]
