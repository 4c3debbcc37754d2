"""Bayes-optimal set-valued prediction for multi-class classification."""

from .inference import (
    ClassDist,
    PredictionSet,
    brute_force_bayes,
    compute_regret,
    expected_utility,
    prefix_utility_curve,
    svbop,
    threshold_predict,
    top_s_predict,
)
from .providers import ClassProvider, FullProvider, SortedDistProvider
from .utility import (
    UtilitySpec,
    credal,
    dominates_precision,
    eval_g,
    eval_u,
    exponential,
    fbeta,
    gen_reject,
    gen_reject_admissible_region,
    is_concave,
    is_one_over_x_convex,
    is_strictly_decreasing,
    logarithmic,
    normalized,
    parse_utility,
    precision,
    recall,
    reject,
)

__version__ = "0.1.0"

__all__ = [
    "ClassDist",
    "ClassProvider",
    "FullProvider",
    "PredictionSet",
    "SortedDistProvider",
    "UtilitySpec",
    "brute_force_bayes",
    "compute_regret",
    "credal",
    "dominates_precision",
    "eval_g",
    "eval_u",
    "expected_utility",
    "exponential",
    "fbeta",
    "gen_reject",
    "gen_reject_admissible_region",
    "is_concave",
    "is_one_over_x_convex",
    "is_strictly_decreasing",
    "logarithmic",
    "normalized",
    "parse_utility",
    "precision",
    "prefix_utility_curve",
    "recall",
    "reject",
    "svbop",
    "threshold_predict",
    "top_s_predict",
]
