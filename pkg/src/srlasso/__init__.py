"""Sparsity-ranked lasso: group-size weighted L1 regression with pathwise coordinate descent."""

from srlasso.data import (
    Dataset,
    GroupedDesign,
    StandardizationParams,
    destandardize,
    load_dataset,
    standardize,
)
from srlasso.expand import (
    ExpansionSpec,
    HierarchyClass,
    classify_interaction,
    count_admissible_interactions,
    expand,
    expand_interactions,
    expand_polynomials,
)
from srlasso.penalty import (
    PenaltySpec,
    cumulative_weights,
    make_penalty,
    prior_information,
    srl_weights,
)
from srlasso.solver import (
    FitPath,
    SolverConfig,
    fit_path,
    kkt_violations,
    lambda_max,
    predict,
    soft_threshold,
)
from srlasso.tuning import (
    CvResult,
    IcResult,
    cross_validate,
    information_criterion,
    make_folds,
    select_rule,
)

__version__ = "0.1.0"

__all__ = [
    "CvResult",
    "Dataset",
    "ExpansionSpec",
    "FitPath",
    "GroupedDesign",
    "HierarchyClass",
    "IcResult",
    "PenaltySpec",
    "SolverConfig",
    "StandardizationParams",
    "classify_interaction",
    "count_admissible_interactions",
    "cross_validate",
    "cumulative_weights",
    "destandardize",
    "expand",
    "expand_interactions",
    "expand_polynomials",
    "fit_path",
    "information_criterion",
    "kkt_violations",
    "lambda_max",
    "load_dataset",
    "make_folds",
    "make_penalty",
    "predict",
    "prior_information",
    "select_rule",
    "soft_threshold",
    "srl_weights",
    "standardize",
]
