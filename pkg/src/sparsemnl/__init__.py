"""Sparse multinomial logistic classification.

Complexity-penalized feature selection, multinomial logistic group Lasso and
group Slope, and a Monte-Carlo harness for excess-risk experiments.
"""

from .mnl_core import (
    CoeffMatrix,
    Convention,
    FeatureGenerator,
    MarginConfig,
    bayes_classify,
    check_assumption_a,
    log_likelihood,
    neg_loglik_gradient,
    one_hot,
    sample_dataset,
    softmax_probs,
)
from .risk_lab import (
    RiskEstimate,
    bayes_risk,
    excess_risk,
    hellinger_sq,
    kl_divergence,
    margin_profile,
    rate_fit,
    weighted_frobenius,
)
from .slope_opt import (
    LambdaSeq,
    SlopeFit,
    SolverOptions,
    dual_sorted_group_norm,
    fit_group_lasso,
    fit_group_slope,
    group_slope_norm,
    lambda_equal,
    lambda_variable,
    prox_group_slope,
)
from .subset_select import (
    ModelSubset,
    PenaltyConfig,
    SelectionResult,
    fit_constrained_mle,
    penalty,
    plugin_classifier,
    select_model,
)

__version__ = "0.1.0"
