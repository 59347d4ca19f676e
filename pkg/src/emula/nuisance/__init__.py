"""Outcome and treatment nuisance models."""
from .forest import ForestModel, fit_forest
from .linear import PROBA_FLOOR, LinearModel, fit_logistic, fit_ridge
from .search import (
    CrossFitPlan,
    Family,
    ModelSpec,
    candidate_specs,
    cross_fit_predict,
    fit_model,
    fit_predict,
    in_sample_predict,
    make_plan,
    random_search,
    random_search_detailed,
    resolve_family,
    select_by_cv,
)

__all__ = [
    "ForestModel", "fit_forest", "PROBA_FLOOR", "LinearModel", "fit_logistic", "fit_ridge",
    "CrossFitPlan", "Family", "ModelSpec", "candidate_specs", "cross_fit_predict", "fit_model",
    "fit_predict", "in_sample_predict", "make_plan", "random_search", "random_search_detailed",
    "resolve_family", "select_by_cv",
]
