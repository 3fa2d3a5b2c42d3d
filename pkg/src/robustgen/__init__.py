"""Robustness certificates, generalization bounds, and Monte-Carlo validation."""

__version__ = "0.1.0"

from .bounds import (
    BoundReport,
    adaptive_gap_bound,
    iid_gap_bound,
    markov_gap_bound,
    pseudo_gap_bound,
    quantile_sandwich,
    sharp_adaptive_gap_bound,
)
from .certificates import (
    RobustnessCertificate,
    certify_lasso,
    certify_lipschitz,
    certify_majority_vote,
    certify_margin,
    certify_network,
    certify_pca,
    certify_svm,
    empirical_epsilon,
    kernel_spread,
)
from .harness import (
    ExperimentConfig,
    ExperimentResult,
    LearnerSpec,
    TrialOutcome,
    default_family_setups,
    run_iid_experiment,
    run_markov_experiment,
    run_quantile_experiment,
    verify_certificates,
)
from .learners import (
    KernelSpec,
    LossSpec,
    loss,
    loss_many,
    nn_forward,
    train_lasso,
    train_majority_vote,
    train_network,
    train_norm_constrained_regression,
    train_pca,
    train_svm,
)
from .metric_cover import (
    BinaryLabels,
    Box,
    FiniteSet,
    Interval,
    SampleSpace,
    cell_index,
    greedy_cover,
    grid_cover,
    partition_from_cover,
    product_partition,
)
from .sampling import (
    DistributionSpec,
    DoeblinChain,
    LabelModel,
    Marginal,
    doeblin_params,
    sample_chain,
    sample_iid,
    stationary_distribution,
    true_risk,
)
from .stats import beta_quantile, beta_truncated_mean, bhc_lambda, multinomial_deviation
