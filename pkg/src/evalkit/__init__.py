"""Evaluation toolkit: cost-based metrics with naive references, bootstrap
confidence intervals, and leakage-safe data splits."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    CostMatrix,
    Priors,
    SequenceTrialSet,
    TrialFormatError,
    TrialSet,
    concat_trials,
    dump_trials,
    empirical_priors,
    load_sequences,
    load_trials,
)
from .metrics import (  # noqa: E402
    Alignment,
    Metric,
    MetricError,
    MetricResult,
    accuracy,
    align,
    balanced_error_rate,
    bayes_decisions,
    brier_score,
    confusion,
    cross_entropy,
    error_rate_sequences,
    expected_cost,
    get_metric,
    normalized_expected_cost,
    normalized_psr,
    normalized_total_error,
    regression_metrics,
)
from .bootstrap import (  # noqa: E402
    BootstrapConfig,
    BootstrapDistribution,
    BootstrapError,
    ConfidenceInterval,
    bootstrap_ci,
    bootstrap_difference,
    percentile,
    pool_distributions,
    resample_indices,
)
from .splits import (  # noqa: E402
    AuditReport,
    FoldPlan,
    SampleCatalog,
    SplitError,
    audit,
    audit_plan,
    make_folds,
    make_nested_folds,
    pooled_outputs,
)
