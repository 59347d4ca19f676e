"""Conditional average treatment effects from residual-on-residual regression.

Nuisances are cross-fit on a training split; the final stage is a ridge
regression of outcome residuals on treatment residuals interacted with the
heterogeneity features. Predictions and subgroup summaries are produced on the
held-out test split only.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .cohort import TrialProtocol, build_cohort
from .errors import ConfigError, DegenerateTreatmentResiduals, DimensionMismatch, EmptyStratum
from .events import EventStore
from .features import AggregationSpec, DesignMatrix, Window, aggregate, fit_imputer
from .nuisance import cross_fit_predict, make_plan
from .pipeline import AnalysisData, EstimationConfig, resolve_specs


@dataclass
class CateModel:
    """theta(x) = intercept + x @ coef, on the original feature scale."""

    intercept: float
    coef: np.ndarray
    alpha: float
    column_names: list = field(default_factory=list)
    n_train: int = 0

    def to_json(self) -> dict:
        return {"intercept": float(self.intercept), "alpha": self.alpha, "n_train": self.n_train,
                "coef": {c: float(b) for c, b in zip(self.column_names, self.coef)}}


def fit_cate_dml(y_tilde, a_tilde, x_cate, alpha: float = 1.0, column_names=None) -> CateModel:
    """Minimize sum (y~ - theta(x) a~)^2 + alpha |slopes|^2 with a linear theta.

    Features are standardized before the penalty is applied and the
    coefficients mapped back, so predictions do not depend on the scale or
    location of ``x_cate``. The intercept is not penalized; with no features
    the solution is the constant residual-on-residual slope.
    """
    yt = np.asarray(y_tilde, dtype=float)
    at = np.asarray(a_tilde, dtype=float)
    x = np.asarray(x_cate, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.size == 0:
        x = np.empty((yt.size, 0))
    if not (yt.shape == at.shape and x.shape[0] == yt.size):
        raise DimensionMismatch("residuals and x_cate must have matching rows")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if float(np.sum(at * at)) < 1e-12:
        raise DegenerateTreatmentResiduals("treatment residuals are numerically zero")
    p = x.shape[1]
    names = list(column_names) if column_names is not None else [f"x{j}" for j in range(p)]
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    const = ~(sd > 0)
    mu = np.where(const, 0.0, mu)
    sd = np.where(const, 1.0, sd)
    z = np.column_stack([at, ((x - mu) / sd) * at[:, None]])
    gram = z.T @ z
    gram[1:, 1:] += alpha * np.eye(p)
    b = np.linalg.solve(gram, z.T @ yt)
    coef = b[1:] / sd
    intercept = float(b[0] - np.sum(coef * mu))
    return CateModel(intercept, coef, float(alpha), names, int(yt.size))


def predict_cate(model: CateModel, x_cate) -> np.ndarray:
    x = np.asarray(x_cate, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if model.coef.size == 1 else x[None, :]
    if x.shape[1] != model.coef.size:
        raise DimensionMismatch(f"expected {model.coef.size} CATE features, got {x.shape[1]}")
    return model.intercept + x @ model.coef


# --- subgroups ----------------------------------------------------------------

BOX_FIELDS = ("group", "stratum", "q25", "median", "q75", "lo_whisker", "hi_whisker", "n")


@dataclass(frozen=True)
class BoxStats:
    group: str
    stratum: int
    q25: float
    median: float
    q75: float
    lo_whisker: float
    hi_whisker: float
    n: int


def box_stats(values, group: str = "", stratum: int = 1) -> BoxStats:
    """Quartiles (linear interpolation) and 1.5 IQR whiskers clamped to observed values."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise EmptyStratum(f"stratum {stratum} of {group!r} is empty")
    q25, med, q75 = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    iqr = q75 - q25
    lo = v[v >= q25 - 1.5 * iqr].min()
    hi = v[v <= q75 + 1.5 * iqr].max()
    return BoxStats(group, int(stratum), float(q25), float(med), float(q75), float(lo), float(hi), int(v.size))


@dataclass
class SubgroupReport:
    boxes: list  # BoxStats, ordered by group then stratum (1 before 0)

    def get(self, group: str, stratum: int) -> BoxStats:
        for b in self.boxes:
            if b.group == group and b.stratum == stratum:
                return b
        raise KeyError((group, stratum))

    def to_json(self) -> list:
        return [{k: getattr(b, k) for k in BOX_FIELDS} for b in self.boxes]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(BOX_FIELDS)
            for b in self.boxes:
                w.writerow([b.group, b.stratum] + [repr(getattr(b, k)) for k in BOX_FIELDS[2:7]] + [b.n])


def subgroup_summary(cate_pred, groups: dict) -> SubgroupReport:
    pred = np.asarray(cate_pred, dtype=float)
    boxes = []
    for name, g in groups.items():
        g = np.asarray(g).astype(bool)
        if g.shape != pred.shape:
            raise DimensionMismatch(f"group {name!r} length differs from predictions")
        for stratum, mask in ((1, g), (0, ~g)):
            boxes.append(box_stats(pred[mask], name, stratum))
    return SubgroupReport(boxes)


# --- full run -----------------------------------------------------------------

def stratified_split(a, test_size: float = 0.2, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded train/test split keeping the treated share equal in both parts."""
    a = np.asarray(a)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for v in np.unique(a):
        idx = rng.permutation(np.flatnonzero(a == v))
        k = int(round(test_size * idx.size))
        test.append(idx[:k])
        train.append(idx[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass(frozen=True)
class SubgroupRule:
    """Binary subgroup ``1[last pre-treatment value of code > threshold]``."""

    code: str
    threshold: float = 0.0


@dataclass
class HteResult:
    model: CateModel
    test_ids: list
    predictions: np.ndarray
    report: SubgroupReport
    train_rows: np.ndarray
    test_rows: np.ndarray

    def write_predictions(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["patient_id", "cate"])
            for pid, v in zip(self.test_ids, self.predictions):
                w.writerow([pid, repr(float(v))])


def _fill(m: DesignMatrix, rows) -> np.ndarray:
    med = fit_imputer(m, rows).medians
    return np.where(np.isnan(m.values), med[None, :], m.values)


def run_hte(store: EventStore, protocol: TrialProtocol, cfg: EstimationConfig | None = None,
            alpha: float = 1.0, groups: dict | None = None, test_size: float = 0.2,
            n_jobs: int = 1) -> HteResult:
    """Cohort -> train/test split -> cross-fit residuals on train -> CATE ridge -> test summaries."""
    cfg = cfg or EstimationConfig(estimator="DML")
    if not protocol.cate_codes:
        raise ConfigError("protocol declares no cate_codes")
    cohort = build_cohort(store, protocol)
    x = aggregate(store, cohort, protocol, cfg.aggregation, window=Window.pretreatment)
    xc = aggregate(store, cohort, protocol, AggregationSpec.Last, window=Window.pretreatment,
                   codes=protocol.cate_codes)
    a, y = cohort.a, cohort.y
    train, test = stratified_split(a, test_size, cfg.seed)
    assert not np.intersect1d(train, test).size

    data = AnalysisData(x.take(train), a[train], y[train], not protocol.outcome_value)
    specs = resolve_specs(data, replace(cfg, estimator="DML"), n_jobs)
    plan = make_plan(train.size, cfg.k_folds, cfg.seed, stratify=data.a)
    e_hat = np.clip(cross_fit_predict(specs.treatment, data.x, data.a, plan, n_jobs=n_jobs), cfg.clip, 1 - cfg.clip)
    m_hat = cross_fit_predict(specs.marginal, data.x, data.y, plan, n_jobs=n_jobs)

    xc_all = _fill(xc, train)
    model = fit_cate_dml(data.y - m_hat, data.a - e_hat, xc_all[train], alpha, xc.column_names)
    pred = predict_cate(model, xc_all[test])

    rules = groups or {c: SubgroupRule(c) for c in protocol.cate_codes}
    grp_codes = [r.code for r in rules.values()]
    gx = aggregate(store, cohort, protocol, AggregationSpec.Last, window=Window.pretreatment, codes=grp_codes)
    masks = {}
    for j, (name, r) in enumerate(rules.items()):
        masks[name] = gx.values[test, j] > r.threshold  # missing values fall in the 0 stratum
    report = subgroup_summary(pred, masks)
    ids = [cohort.patient_ids[i] for i in test]
    return HteResult(model, ids, pred, report, train, test)
