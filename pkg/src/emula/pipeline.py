"""End-to-end effect estimation for one analytic choice set.

Nuisance hyper-parameters are searched once on the full cohort. Single-robust
estimators (IPW, G-formula, matching) then refit their nuisances on the whole
sample; doubly robust ones (AIPW, DML) cross-fit them. Bootstrap replicates
repeat imputation, nuisance fitting and estimation on each resample with the
hyper-parameters held fixed.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from . import estimators as est
from .cohort import Cohort, TrialProtocol, build_cohort
from .errors import ConfigError, EstimationError, SingleArm
from .events import EventStore
from .features import AggregationSpec, DesignMatrix, Window, aggregate
from .nuisance import (
    Family,
    ModelSpec,
    cross_fit_predict,
    in_sample_predict,
    make_plan,
    random_search,
    resolve_family,
)

log = logging.getLogger(__name__)


class Estimator(str, Enum):
    PSM = "PSM"
    IPW = "IPW"
    GFormula = "GFormula"
    AIPW = "AIPW"
    DML = "DML"


ESTIMATORS = tuple(Estimator)
PSM_CAVEAT = "matched-pair ATT; percentile bootstrap is not theoretically grounded for matching"


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 10
    min_leaf: int = 5


@dataclass(frozen=True)
class EstimationConfig:
    """Analytic choices for one estimate. Every field is echoed into run reports."""

    estimator: Estimator = Estimator.AIPW
    nuisance: str = "linear"
    aggregation: AggregationSpec = AggregationSpec.Last
    estimand: est.EstimandKind = est.EstimandKind.RiskDifference
    clip: float = 0.01
    caliper_sd: float = 0.2
    k_folds: int = 5
    search: bool = True
    n_iter: int = 10
    search_k: int = 5
    forest: ForestParams = ForestParams()
    penalty: float = 1.0
    n_boot: int = 50
    alpha: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        object.__setattr__(self, "aggregation", AggregationSpec(self.aggregation))
        object.__setattr__(self, "estimand", est.EstimandKind(self.estimand))
        if isinstance(self.forest, dict):
            object.__setattr__(self, "forest", ForestParams(**self.forest))
        if self.nuisance not in ("linear", "forest"):
            raise ConfigError(f"nuisance must be 'linear' or 'forest', got {self.nuisance!r}")
        if self.estimand is est.EstimandKind.RiskRatio and self.estimator in (Estimator.DML, Estimator.PSM):
            raise ConfigError(f"{self.estimator.value} reports risk differences only")
        if not 0 < self.clip < 0.5:
            raise ConfigError("clip must lie in (0, 0.5)")
        if self.n_boot == 1 or self.n_boot < 0:
            raise ConfigError("n_boot must be 0 (no interval) or >= 2")
        if self.k_folds < 2:
            raise ConfigError("k_folds must be >= 2")

    def to_json(self) -> dict:
        d = asdict(self)
        for k in ("estimator", "aggregation", "estimand"):
            d[k] = getattr(self, k).value
        return d

    @classmethod
    def from_json(cls, d: dict) -> EstimationConfig:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown estimation keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class AnalysisData:
    """Raw (unimputed) confounders plus treatment and outcome for one cohort.

    ``x_outcome`` / ``x_treatment`` override ``x`` for the respective nuisance.
    """

    x: DesignMatrix
    a: np.ndarray
    y: np.ndarray
    binary: bool
    x_outcome: DesignMatrix | None = None
    x_treatment: DesignMatrix | None = None
    window_h: float | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=float)

    def __len__(self):
        return self.a.size

    @property
    def xo(self) -> DesignMatrix:
        return self.x_outcome if self.x_outcome is not None else self.x

    @property
    def xt(self) -> DesignMatrix:
        return self.x_treatment if self.x_treatment is not None else self.x

    def take(self, rows) -> AnalysisData:
        rows = np.asarray(rows, dtype=np.int64)
        return AnalysisData(
            self.x.take(rows), self.a[rows], self.y[rows], self.binary,
            None if self.x_outcome is None else self.x_outcome.take(rows),
            None if self.x_treatment is None else self.x_treatment.take(rows),
            self.window_h)


def analysis_data(store: EventStore, cohort: Cohort, aggregation=AggregationSpec.Last,
                  window=Window.pretreatment, codes=None) -> AnalysisData:
    x = aggregate(store, cohort, cohort.protocol, aggregation, window=window, codes=codes)
    return AnalysisData(x, cohort.a, cohort.y, not cohort.protocol.outcome_value,
                        window_h=cohort.protocol.eligibility_window_h)


@dataclass(frozen=True)
class NuisanceSpecs:
    treatment: ModelSpec
    outcome1: ModelSpec
    outcome0: ModelSpec
    marginal: ModelSpec  # E[Y | X], used by DML

    def to_json(self) -> dict:
        return {k: getattr(self, k).to_json() for k in ("treatment", "outcome1", "outcome0", "marginal")}


def _default_spec(family: Family, cfg: EstimationConfig) -> ModelSpec:
    if family.is_forest:
        f = cfg.forest
        return ModelSpec(family, n_trees=f.n_trees, max_depth=f.max_depth, min_leaf=f.min_leaf, seed=cfg.seed)
    if family is Family.LogisticL2:
        return ModelSpec(family, c=cfg.penalty)
    return ModelSpec(family, alpha=cfg.penalty)


def _search(x, y, family, cfg, rows, n_jobs):
    from .features import impute_and_scale

    sub = x.take(rows)
    xx = impute_and_scale(sub, np.arange(len(sub)), scale=not family.is_forest)
    spec = random_search(xx, y[rows], family, n_iter=cfg.n_iter, k=cfg.search_k, seed=cfg.seed, n_jobs=n_jobs)
    if family.is_forest:
        spec = replace(spec, seed=cfg.seed, min_leaf=cfg.forest.min_leaf)
    return spec


def resolve_specs(data: AnalysisData, cfg: EstimationConfig, n_jobs: int = 1) -> NuisanceSpecs:
    """Nuisance specs for ``cfg``: random search on the full cohort, or fixed defaults."""
    t_fam = resolve_family(cfg.nuisance, True)
    o_fam = resolve_family(cfg.nuisance, data.binary)
    if not cfg.search:
        t = _default_spec(t_fam, cfg)
        o = _default_spec(o_fam, cfg)
        return NuisanceSpecs(t, o, o, o)
    need = _needs(cfg.estimator)
    allrows = np.arange(len(data))
    default_o = _default_spec(o_fam, cfg)
    t = _search(data.xt, data.a.astype(float), t_fam, cfg, allrows, n_jobs) if "e" in need else _default_spec(t_fam, cfg)
    o1 = o0 = m = default_o
    if "mu" in need:
        o1 = _search(data.xo, data.y, o_fam, cfg, np.flatnonzero(data.a == 1), n_jobs)
        o0 = _search(data.xo, data.y, o_fam, cfg, np.flatnonzero(data.a == 0), n_jobs)
    if "m" in need:
        m = _search(data.xo, data.y, o_fam, cfg, allrows, n_jobs)
    return NuisanceSpecs(t, o1, o0, m)


def _needs(estimator: Estimator) -> set:
    return {
        Estimator.PSM: {"e"},
        Estimator.IPW: {"e"},
        Estimator.GFormula: {"mu"},
        Estimator.AIPW: {"e", "mu"},
        Estimator.DML: {"e", "m"},
    }[estimator]


def point_estimate(data: AnalysisData, cfg: EstimationConfig, specs: NuisanceSpecs, n_jobs: int = 1):
    """Fit nuisances on ``data`` and return (point, extras dict)."""
    a, y = data.a, data.y
    if a.min() == a.max():
        raise SingleArm("cohort has a single treatment arm")
    e_cls = cfg.estimator
    if e_cls in (Estimator.PSM, Estimator.IPW):
        e_hat = in_sample_predict(specs.treatment, data.xt, a, n_jobs=n_jobs)
        if e_cls is Estimator.IPW:
            fit = est.ipw(e_hat, a, y, cfg.clip, cfg.estimand)
            return fit.point, {"m1": fit.means.m1, "m0": fit.means.m0}
        m = est.psm(e_hat, a, y, cfg.caliper_sd)
        return m.point, {"n_matched": m.n_matched}
    if e_cls is Estimator.GFormula:
        mu1 = in_sample_predict(specs.outcome1, data.xo, y, fit_mask=a == 1, n_jobs=n_jobs)
        mu0 = in_sample_predict(specs.outcome0, data.xo, y, fit_mask=a == 0, n_jobs=n_jobs)
        pm, point = est.ate_gformula(mu1, mu0, cfg.estimand)
        return point, {"m1": pm.m1, "m0": pm.m0}
    plan = make_plan(len(data), cfg.k_folds, cfg.seed, stratify=a)
    e_hat = cross_fit_predict(specs.treatment, data.xt, a, plan, n_jobs=n_jobs)
    if e_cls is Estimator.AIPW:
        mu1 = cross_fit_predict(specs.outcome1, data.xo, y, plan, fit_mask=a == 1, n_jobs=n_jobs)
        mu0 = cross_fit_predict(specs.outcome0, data.xo, y, plan, fit_mask=a == 0, n_jobs=n_jobs)
        fit = est.aipw(mu1, mu0, e_hat, a, y, cfg.clip, cfg.estimand)
        return fit.point, {"m1": fit.means.m1, "m0": fit.means.m0}
    m_hat = cross_fit_predict(specs.marginal, data.xo, y, plan, n_jobs=n_jobs)
    return est.ate_dml(m_hat, e_hat, a, y, cfg.clip), {}


class CellPipeline:
    """Picklable ``rows -> estimate`` closure used by the bootstrap."""

    def __init__(self, data: AnalysisData, cfg: EstimationConfig, specs: NuisanceSpecs):
        self.data = data
        self.cfg = cfg
        self.specs = specs

    def __call__(self, rows) -> float:
        return point_estimate(self.data.take(rows), self.cfg, self.specs)[0]


def choices(cfg: EstimationConfig, window_h) -> dict:
    return {"aggregation": cfg.aggregation.value, "nuisance": cfg.nuisance,
            "window_h": None if window_h is None else float(window_h), "seed": int(cfg.seed)}


def estimate(data: AnalysisData, cfg: EstimationConfig, n_jobs: int = 1, specs: NuisanceSpecs | None = None):
    """Point estimate plus percentile bootstrap interval for one choice set.

    Returns ``(EffectEstimate, NuisanceSpecs)``.
    """
    specs = specs or resolve_specs(data, cfg, n_jobs)
    point, extra = point_estimate(data, cfg, specs)
    lo = hi = float("nan")
    if cfg.n_boot:
        lo, hi = est.bootstrap_ci(CellPipeline(data, cfg, specs), len(data), cfg.n_boot, cfg.alpha,
                                  cfg.seed, n_jobs=n_jobs)
    is_psm = cfg.estimator is Estimator.PSM
    result = est.EffectEstimate(
        estimator_id=f"{cfg.estimator.value}/{cfg.nuisance}",
        estimand=cfg.estimand, point=float(point), ci_low=lo, ci_high=hi, n_boot=cfg.n_boot,
        choices=choices(cfg, data.window_h), target="ATT" if is_psm else "ATE",
        caveat=PSM_CAVEAT if is_psm else "")
    return result, specs


def run_estimate(store: EventStore, protocol: TrialProtocol, cfg: EstimationConfig, n_jobs: int = 1,
                 window=Window.pretreatment):
    """Cohort -> aggregated confounders -> estimate."""
    cohort = build_cohort(store, protocol)
    data = analysis_data(store, cohort, cfg.aggregation, window=window)
    result, specs = estimate(data, cfg, n_jobs)
    return cohort, result, specs


def safe_estimate(data: AnalysisData, cfg: EstimationConfig, n_jobs: int = 1):
    """Like :func:`estimate` but failures become an error-tagged EffectEstimate."""
    try:
        return estimate(data, cfg, n_jobs)[0]
    except (EstimationError, ValueError) as exc:
        log.warning("estimation failed for %s/%s: %s", cfg.estimator.value, cfg.nuisance, exc)
        return est.EffectEstimate(
            estimator_id=f"{cfg.estimator.value}/{cfg.nuisance}", estimand=cfg.estimand,
            n_boot=cfg.n_boot, choices=choices(cfg, data.window_h),
            target="ATT" if cfg.estimator is Estimator.PSM else "ATE",
            error=f"{type(exc).__name__}: {exc}")


def quadratic_features(m: DesignMatrix) -> DesignMatrix:
    """Append all squares and pairwise products of the columns."""
    vals = m.values
    names = list(m.column_names)
    cols, new = [], []
    p = vals.shape[1]
    for i in range(p):
        for j in range(i, p):
            cols.append(vals[:, i] * vals[:, j])
            new.append(f"{names[i]}*{names[j]}")
    q = np.column_stack(cols) if cols else np.empty((len(m), 0))
    mask = np.isnan(q)
    return m.hstack(DesignMatrix(q, new, mask, list(m.row_ids)))
