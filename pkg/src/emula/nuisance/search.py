"""Model specs, cross-fitting and random hyper-parameter search."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from ..errors import EmulaError, FoldTooSmall, SingleClass
from ..features import DesignMatrix, impute_and_scale
from .forest import fit_forest
from .linear import PROBA_FLOOR, fit_logistic, fit_ridge

log = logging.getLogger(__name__)

PENALTY_GRID = np.logspace(-3, 2, 10)
FOREST_GRID = [(t, dpt) for t in (10, 100, 200) for dpt in (3, 10, 50)]


class Family(str, Enum):
    RidgeRegression = "RidgeRegression"
    LogisticL2 = "LogisticL2"
    ForestRegressor = "ForestRegressor"
    ForestClassifier = "ForestClassifier"

    @property
    def classifier(self) -> bool:
        return self in (Family.LogisticL2, Family.ForestClassifier)

    @property
    def is_forest(self) -> bool:
        return self in (Family.ForestRegressor, Family.ForestClassifier)


def resolve_family(kind: str, classification: bool) -> Family:
    """Map a nuisance kind ("linear" / "forest") onto the concrete family."""
    kind = kind.lower()
    if kind == "linear":
        return Family.LogisticL2 if classification else Family.RidgeRegression
    if kind == "forest":
        return Family.ForestClassifier if classification else Family.ForestRegressor
    try:
        return Family(kind)
    except ValueError:
        raise ValueError(f"unknown nuisance family {kind!r}") from None


@dataclass(frozen=True)
class ModelSpec:
    family: Family
    alpha: float = 1.0          # ridge penalty
    c: float = 1.0              # inverse logistic penalty
    n_trees: int = 100
    max_depth: int = 10
    min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.alpha <= 0 or self.c <= 0:
            raise ValueError("alpha and c must be > 0")
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("n_trees, max_depth and min_leaf must be >= 1")

    @property
    def classifier(self) -> bool:
        return self.family.classifier

    def params(self) -> dict:
        if self.family is Family.RidgeRegression:
            return {"alpha": self.alpha}
        if self.family is Family.LogisticL2:
            return {"c": self.c}
        return {"n_trees": self.n_trees, "max_depth": self.max_depth,
                "min_leaf": self.min_leaf, "seed": self.seed}

    def to_json(self) -> dict:
        return {"family": self.family.value, **self.params()}

    @classmethod
    def from_json(cls, d: dict) -> ModelSpec:
        return cls(**d)

    def label(self) -> str:
        return self.family.value + "(" + ", ".join(f"{k}={v:g}" for k, v in self.params().items()) + ")"


def fit_model(spec: ModelSpec, x, y, feature_names=None, n_jobs: int = 1):
    """Fit the nuisance described by ``spec``; returns an object with ``predict``."""
    f = spec.family
    if f is Family.RidgeRegression:
        return fit_ridge(x, y, spec.alpha)
    if f is Family.LogisticL2:
        return fit_logistic(x, y, spec.c)
    if f.classifier and np.all(np.asarray(y) == np.asarray(y)[0]):
        raise SingleClass("outcome has a single class")
    return fit_forest(x, y, n_trees=spec.n_trees, max_depth=spec.max_depth, min_leaf=spec.min_leaf,
                      seed=spec.seed, classifier=f.classifier, feature_names=feature_names, n_jobs=n_jobs)


@dataclass(frozen=True)
class CrossFitPlan:
    k: int
    seed: int
    folds: np.ndarray

    @property
    def n(self) -> int:
        return self.folds.size

    def split(self, fold: int):
        test = np.flatnonzero(self.folds == fold)
        train = np.flatnonzero(self.folds != fold)
        return train, test


def make_plan(n: int, k: int = 5, seed: int = 0, stratify=None) -> CrossFitPlan:
    """Random fold assignment; fold sizes differ by at most one.

    With ``stratify`` each label value is spread round-robin over the folds.
    """
    if k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    if stratify is None:
        order = rng.permutation(n)
    else:
        s = np.asarray(stratify)
        order = np.concatenate([rng.permutation(np.flatnonzero(s == v)) for v in np.unique(s)])
    folds = np.empty(n, dtype=np.int64)
    folds[order] = np.arange(n) % k
    return CrossFitPlan(k, seed, folds)


def _prepare(x, train, spec: ModelSpec):
    """Complete matrix for all rows with statistics from ``train`` only."""
    scale = not spec.family.is_forest
    if isinstance(x, DesignMatrix):
        return impute_and_scale(x, train, scale=scale), x.column_names
    x = np.asarray(x, dtype=float)
    if scale:
        sub = x[train]
        mean = sub.mean(axis=0)
        sd = sub.std(axis=0)
        const = ~(sd > 0)
        x = (x - np.where(const, 0.0, mean)) / np.where(const, 1.0, sd)
    return x, None


def fit_predict(spec: ModelSpec, x, y, train, test, fit_mask=None, n_jobs: int = 1) -> np.ndarray:
    """Fit on ``train`` rows (restricted to ``fit_mask``) and predict ``test`` rows."""
    y = np.asarray(y, dtype=float)
    xx, names = _prepare(x, train, spec)
    rows = train if fit_mask is None else train[np.asarray(fit_mask, dtype=bool)[train]]
    if spec.classifier and np.unique(y[rows]).size < 2:
        raise FoldTooSmall("a training fold lacks one of the two classes")
    model = fit_model(spec, xx[rows], y[rows], feature_names=names, n_jobs=n_jobs)
    return model.predict(xx[test])


def cross_fit_predict(spec: ModelSpec, x, y, plan: CrossFitPlan, fit_mask=None, n_jobs: int = 1) -> np.ndarray:
    """Out-of-fold predictions: each row is predicted by a model fit on the other folds.

    ``x`` may be a raw :class:`DesignMatrix` (imputation and scaling are refit
    per fold) or a complete array. ``fit_mask`` restricts which training rows
    are used for fitting (e.g. one treatment arm for a T-learner); every row
    still receives a prediction.
    """
    y = np.asarray(y, dtype=float)
    if plan.n != y.size:
        raise ValueError("plan does not cover all rows")
    out = np.empty(y.size)
    for fold in range(plan.k):
        train, test = plan.split(fold)
        out[test] = fit_predict(spec, x, y, train, test, fit_mask, n_jobs)
    return out


def in_sample_predict(spec: ModelSpec, x, y, fit_mask=None, n_jobs: int = 1) -> np.ndarray:
    """Fit on all rows (optionally masked) and predict all rows."""
    n = np.asarray(y).size
    rows = np.arange(n)
    return fit_predict(spec, x, y, rows, rows, fit_mask, n_jobs)


def loss(y, pred, classifier: bool) -> float:
    y = np.asarray(y, dtype=float)
    if classifier:
        p = np.clip(pred, PROBA_FLOOR, 1 - PROBA_FLOOR)
        return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))
    return float(np.mean((y - pred) ** 2))


def candidate_specs(family: Family, seed: int = 0) -> list[ModelSpec]:
    if family is Family.RidgeRegression:
        return [ModelSpec(family, alpha=float(a)) for a in PENALTY_GRID]
    if family is Family.LogisticL2:
        return [ModelSpec(family, c=float(c)) for c in PENALTY_GRID]
    return [ModelSpec(family, n_trees=t, max_depth=dpt, seed=seed) for t, dpt in FOREST_GRID]


@dataclass
class SearchResult:
    spec: ModelSpec
    loss: float
    trials: list  # (spec, mean out-of-fold loss or None if the candidate failed)


def random_search_detailed(x, y, family, n_iter: int = 10, k: int = 5, seed: int = 0,
                           n_jobs: int = 1, candidates=None) -> SearchResult:
    """Sample ``n_iter`` grid points without replacement and score each by k-fold CV."""
    family = Family(family)
    y = np.asarray(y, dtype=float)
    grid = list(candidates) if candidates is not None else candidate_specs(family, seed)
    rng = np.random.default_rng(seed)
    pick = rng.permutation(len(grid))[:max(1, min(n_iter, len(grid)))]
    strat = y if family.classifier else None
    plan = make_plan(y.size, k, seed, stratify=strat)
    trials = []
    best = None
    for i in pick:
        spec = grid[i]
        try:
            oof = cross_fit_predict(spec, x, y, plan, n_jobs=n_jobs)
        except EmulaError as exc:
            log.warning("search candidate %s failed: %s", spec.label(), exc)
            trials.append((spec, None))
            continue
        score = loss(y, oof, family.classifier)
        trials.append((spec, score))
        if best is None or score < best[1]:
            best = (spec, score)
    if best is None:
        raise FoldTooSmall("every search candidate failed")
    return SearchResult(best[0], best[1], trials)


def random_search(x, y, family, n_iter: int = 10, k: int = 5, seed: int = 0, n_jobs: int = 1) -> ModelSpec:
    return random_search_detailed(x, y, family, n_iter, k, seed, n_jobs).spec


def select_by_cv(x, y, families, n_iter: int = 10, k: int = 5, seed: int = 0, n_jobs: int = 1) -> ModelSpec:
    """Best single family by out-of-fold loss (discrete super-learner)."""
    families = [Family(f) for f in families]
    if not families:
        raise ValueError("need at least one family")
    best = None
    for fam in families:
        res = random_search_detailed(x, y, fam, n_iter, k, seed, n_jobs)
        if best is None or res.loss < best.loss:
            best = res
    return best.spec


def with_seed(spec: ModelSpec, seed: int) -> ModelSpec:
    return replace(spec, seed=int(seed)) if spec.family.is_forest else spec


__all__ = [
    "Family", "ModelSpec", "CrossFitPlan", "make_plan", "fit_model", "cross_fit_predict",
    "in_sample_predict", "fit_predict", "random_search", "random_search_detailed", "select_by_cv",
    "resolve_family", "loss", "candidate_specs",
]
