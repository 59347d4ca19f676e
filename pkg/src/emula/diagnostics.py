"""Overlap and balance checks, the shortcut demonstration, vibration grids and window sweeps."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import estimators as est
from .cohort import Cohort, TrialProtocol, build_cohort, sweep_eligibility
from .errors import CohortError, EmulaError, SingleArm, SingleClass
from .events import EventStore
from .features import AggregationSpec, DesignMatrix, Window, aggregate, fit_imputer
from .nuisance import Family, ModelSpec, fit_model, make_plan
from .pipeline import (
    ESTIMATORS,
    AnalysisData,
    EstimationConfig,
    Estimator,
    analysis_data,
    choices,
    safe_estimate,
)

log = logging.getLogger(__name__)

N_BINS = 20


def _arms(a):
    a = np.asarray(a)
    if a.size == 0 or a.min() == a.max():
        raise SingleArm("both treatment arms must be non-empty")
    return a.astype(np.int64)


# --- overlap ------------------------------------------------------------------

def ntv(e_hat, a) -> float:
    """Normalized total variation between arm-conditional covariate laws.

    Uses the propensity score through Bayes' rule:
    ``(1/2n) * sum |e/p - (1-e)/(1-p)|`` with ``p = mean(a)``. 0 means perfect
    overlap, 1 means disjoint supports.
    """
    a = _arms(a)
    e = np.asarray(e_hat, dtype=float)
    if e.shape != a.shape:
        raise ValueError("e_hat and a must have the same length")
    p = a.mean()
    v = 0.5 * float(np.mean(np.abs(e / p - (1 - e) / (1 - p))))
    return min(max(v, 0.0), 1.0)


@dataclass
class OverlapReport:
    ntv: float
    edges: np.ndarray
    treated_counts: np.ndarray
    control_counts: np.ndarray
    treated_fraction: float

    def to_json(self) -> dict:
        return {"ntv": self.ntv, "treated_fraction": self.treated_fraction,
                "edges": self.edges.tolist(), "treated_counts": self.treated_counts.tolist(),
                "control_counts": self.control_counts.tolist()}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "treated", "control"])
            for i in range(self.treated_counts.size):
                w.writerow([repr(float(self.edges[i])), repr(float(self.edges[i + 1])),
                            int(self.treated_counts[i]), int(self.control_counts[i])])


def overlap_report(e_hat, a, n_bins: int = N_BINS) -> OverlapReport:
    a = _arms(a)
    e = np.asarray(e_hat, dtype=float)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    ct, _ = np.histogram(e[a == 1], bins=edges)
    cc, _ = np.histogram(e[a == 0], bins=edges)
    return OverlapReport(ntv(e, a), edges, ct, cc, float(a.mean()))


# --- balance ------------------------------------------------------------------

def smd(x_col, a, weights=None) -> float:
    """Standardized mean difference with the pooled unweighted SD as denominator."""
    a = _arms(a)
    x = np.asarray(x_col, dtype=float)
    t, c = a == 1, a == 0
    pooled = np.sqrt(0.5 * (x[t].var(ddof=1 if t.sum() > 1 else 0) + x[c].var(ddof=1 if c.sum() > 1 else 0)))
    if not pooled > 0:
        return 0.0
    if weights is None:
        diff = x[t].mean() - x[c].mean()
    else:
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        diff = np.average(x[t], weights=w[t]) - np.average(x[c], weights=w[c])
    return float(diff / pooled)


@dataclass
class BalanceReport:
    columns: list
    unweighted: np.ndarray
    weighted: np.ndarray

    def to_json(self) -> dict:
        return {c: {"smd": float(u), "smd_ipw": float(w)}
                for c, u, w in zip(self.columns, self.unweighted, self.weighted)}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["covariate", "smd", "smd_ipw"])
            for c, u, v in zip(self.columns, self.unweighted, self.weighted):
                w.writerow([c, repr(float(u)), repr(float(v))])


def balance_report(x, a, e_hat, clip: float = 0.01, column_names=None) -> BalanceReport:
    """Unweighted and IPW-weighted SMD for every column of a complete matrix."""
    x = np.asarray(x, dtype=float)
    a = _arms(a)
    e = np.clip(np.asarray(e_hat, dtype=float), clip, 1 - clip)
    w = np.where(a == 1, 1 / e, 1 / (1 - e))
    names = list(column_names) if column_names is not None else [f"x{j}" for j in range(x.shape[1])]
    un = np.array([smd(x[:, j], a) for j in range(x.shape[1])])
    wt = np.array([smd(x[:, j], a, w) for j in range(x.shape[1])])
    return BalanceReport(names, un, wt)


# --- discrimination -----------------------------------------------------------

def roc_auc(scores, labels) -> float:
    """ROC AUC as the Mann-Whitney statistic; tied pairs count one half."""
    s = np.asarray(scores, dtype=float)
    l = np.asarray(labels)
    pos, neg = s[l == 1], s[l == 0]
    if pos.size == 0 or neg.size == 0:
        raise SingleClass("roc_auc needs both classes")
    # midranks handle ties
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size)
    ss = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and ss[j + 1] == ss[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1
        i = j + 1
    u = ranks[l == 1].sum() - pos.size * (pos.size + 1) / 2
    return float(u / (pos.size * neg.size))


def _fill(m: DesignMatrix, medians) -> np.ndarray:
    v = m.values.copy()
    miss = np.isnan(v)
    return np.where(miss, medians[None, :], v)


SHORTCUT_FOREST = ModelSpec(Family.ForestClassifier, n_trees=100, max_depth=10, min_leaf=5)


def shortcut_demo(store: EventStore, protocol: TrialProtocol, seed: int = 0, stay_h: float = 24.0,
                  model: ModelSpec = SHORTCUT_FOREST, n_jobs: int = 1) -> dict:
    """Outcome-prediction AUCs contrasting whole-stay and pre-treatment features.

    The cohort is split 80/20 into train and test; the train part is further
    split 80/20 into fit and validation rows. Two forest classifiers are fit:
    one on whole-stay features (which include post-treatment measurements) and
    one on pre-treatment features. Keys:

    - ``auc_trained_all_stay_eval_all_stay``: whole-stay model, whole-stay test features
    - ``auc_trained_all_stay_eval_pretreatment``: same model, pre-treatment test features
    - ``auc_trained_pretreatment_eval_pretreatment``: pre-treatment model on test
    - ``auc_trained_pretreatment_eval_validation``: pre-treatment model on validation rows
    """
    cohort = build_cohort(store, protocol)
    y = cohort.y
    if np.unique(y).size < 2:
        raise SingleClass("outcome has a single class")
    stay = aggregate(store, cohort, protocol, AggregationSpec.Last, window=Window.stay, stay_h=stay_h)
    pre = aggregate(store, cohort, protocol, AggregationSpec.Last, window=Window.pretreatment)
    n = len(cohort)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = int(round(0.2 * n))
    test, train = np.sort(perm[:n_test]), perm[n_test:]
    n_val = int(round(0.2 * train.size))
    val, fit = np.sort(train[:n_val]), np.sort(train[n_val:])
    spec = replace(model, seed=int(seed))

    def fitted(m: DesignMatrix):
        med = fit_imputer(m, fit).medians
        return fit_model(spec, _fill(m, med)[fit], y[fit], feature_names=m.column_names, n_jobs=n_jobs), med

    m_stay, med_stay = fitted(stay)
    m_pre, med_pre = fitted(pre)
    x_stay = _fill(stay, med_stay)
    x_pre_for_stay = _fill(pre, med_stay)
    x_pre = _fill(pre, med_pre)
    return {
        "auc_trained_all_stay_eval_all_stay": roc_auc(m_stay.predict(x_stay[test]), y[test]),
        "auc_trained_all_stay_eval_pretreatment": roc_auc(m_stay.predict(x_pre_for_stay[test]), y[test]),
        "auc_trained_pretreatment_eval_pretreatment": roc_auc(m_pre.predict(x_pre[test]), y[test]),
        "auc_trained_pretreatment_eval_validation": roc_auc(m_pre.predict(x_pre[val]), y[val]),
    }


# --- vibration ----------------------------------------------------------------

DEFAULT_AGGREGATIONS = (AggregationSpec.First, AggregationSpec.Last, AggregationSpec.FirstLast)
DEFAULT_NUISANCES = ("linear", "forest")


@dataclass(frozen=True)
class GridConfig:
    aggregations: tuple = DEFAULT_AGGREGATIONS
    estimators: tuple = ESTIMATORS
    nuisances: tuple = DEFAULT_NUISANCES
    base: EstimationConfig = EstimationConfig()

    def __post_init__(self):
        object.__setattr__(self, "aggregations", tuple(AggregationSpec(x) for x in self.aggregations))
        object.__setattr__(self, "estimators", tuple(Estimator(x) for x in self.estimators))
        object.__setattr__(self, "nuisances", tuple(self.nuisances))
        if not (self.aggregations and self.estimators and self.nuisances):
            raise ValueError("vibration grid must be non-empty")

    def cells(self) -> list[EstimationConfig]:
        return [replace(self.base, aggregation=g, estimator=e, nuisance=u)
                for g in self.aggregations for e in self.estimators for u in self.nuisances]

    def to_json(self) -> dict:
        return {"aggregations": [g.value for g in self.aggregations],
                "estimators": [e.value for e in self.estimators],
                "nuisances": list(self.nuisances), "base": self.base.to_json()}


@dataclass
class VibrationGrid:
    cells: list  # EffectEstimate, in grid order

    def __len__(self):
        return len(self.cells)

    def write_csv(self, path) -> None:
        est.write_estimates_csv(self.cells, path)

    def to_json(self) -> list:
        return [c.to_json() for c in self.cells]


def _run_cells(jobs, n_jobs):
    if n_jobs > 1 and len(jobs) > 1:
        from joblib import Parallel, delayed

        return Parallel(n_jobs=n_jobs)(delayed(safe_estimate)(d, c) for d, c in jobs)
    return [safe_estimate(d, c) for d, c in jobs]


def run_vibration(store: EventStore, protocol: TrialProtocol, grid: GridConfig | None = None,
                  seed: int | None = None, n_jobs: int = 1, cohort: Cohort | None = None) -> VibrationGrid:
    """Full pipeline (with bootstrap intervals) for every grid cell.

    Cells run independently, possibly in parallel, and come back in grid
    order. A failing cell is kept with its error message.
    """
    grid = grid or GridConfig()
    if seed is not None:
        grid = replace(grid, base=replace(grid.base, seed=int(seed)))
    cohort = cohort or build_cohort(store, protocol)
    data = {g: analysis_data(store, cohort, g) for g in grid.aggregations}
    jobs = [(data[c.aggregation], c) for c in grid.cells()]
    return VibrationGrid(_run_cells(jobs, n_jobs))


# --- immortal time sweep ------------------------------------------------------

@dataclass
class ItbSweepReport:
    windows_h: list
    estimates: list
    mean_gap_h: list
    n_cohort: list

    def to_json(self) -> list:
        return [{"window_h": w, "mean_gap_h": g, "n": n, "estimate": e.to_json()}
                for w, e, g, n in zip(self.windows_h, self.estimates, self.mean_gap_h, self.n_cohort)]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(list(est.CSV_FIELDS) + ["mean_gap_h", "n"])
            for e, g, n in zip(self.estimates, self.mean_gap_h, self.n_cohort):
                w.writerow(e.csv_row() + [repr(float(g)), n])


def run_itb_sweep(store: EventStore, protocol: TrialProtocol, windows=(24.0, 48.0, 72.0),
                  cfg: EstimationConfig | None = None, seed: int | None = None,
                  n_jobs: int = 1) -> ItbSweepReport:
    """Re-run estimation with the eligibility (treatment-reading) window varied."""
    windows = [float(w) for w in windows]
    if not windows or any(b <= a for a, b in zip(windows, windows[1:])):
        raise ValueError("windows must be non-empty and strictly increasing")
    cfg = cfg or EstimationConfig()
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    cohorts = sweep_eligibility(store, protocol, windows)
    jobs, gaps, sizes = [], [], []
    for w in windows:
        c = cohorts[w]
        jobs.append((analysis_data(store, c, cfg.aggregation), cfg))
        gaps.append(c.mean_treatment_gap_h())
        sizes.append(len(c))
    return ItbSweepReport(windows, _run_cells(jobs, n_jobs), gaps, sizes)
