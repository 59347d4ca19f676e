"""Confounder aggregation, leakage-free imputation and standardization."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .cohort import Cohort
from .errors import ColumnMismatch, UnknownCode
from .events import EventStore, Kind

log = logging.getLogger(__name__)


class AggregationSpec(str, Enum):
    First = "First"
    Last = "Last"
    Mean = "Mean"
    Median = "Median"
    FirstLast = "FirstLast"


class Window(str, Enum):
    """Which part of the stay confounders are read from.

    ``pretreatment``: [0, min(t_treat, t0 + eligibility window)).
    ``pre_inclusion``: [0, t0).
    ``stay``: [0, stay_h), regardless of treatment.
    """

    pretreatment = "pretreatment"
    pre_inclusion = "pre_inclusion"
    stay = "stay"


@dataclass
class DesignMatrix:
    values: np.ndarray
    column_names: list[str]
    missing_mask: np.ndarray
    row_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.missing_mask = np.asarray(self.missing_mask, dtype=np.uint8)
        if len(set(self.column_names)) != len(self.column_names):
            raise ValueError("column names must be unique")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.column_names):
            raise ValueError("values must be 2-D with one column per name")
        if self.missing_mask.shape != self.values.shape:
            raise ValueError("mask shape must equal matrix shape")

    @property
    def shape(self):
        return self.values.shape

    def __len__(self):
        return self.values.shape[0]

    def take(self, rows) -> DesignMatrix:
        rows = np.asarray(rows, dtype=np.int64)
        ids = [self.row_ids[i] for i in rows] if self.row_ids else []
        return DesignMatrix(self.values[rows], list(self.column_names), self.missing_mask[rows], ids)

    def select(self, names) -> DesignMatrix:
        idx = [self.column_names.index(c) for c in names]
        return DesignMatrix(self.values[:, idx], list(names), self.missing_mask[:, idx], list(self.row_ids))

    def hstack(self, other: DesignMatrix) -> DesignMatrix:
        return DesignMatrix(np.hstack([self.values, other.values]),
                            self.column_names + other.column_names,
                            np.hstack([self.missing_mask, other.missing_mask]), list(self.row_ids))

    def write_csv(self, path, mask_path=None) -> None:
        _write_matrix(path, self.column_names, self.values, float_fmt=True)
        if mask_path is not None:
            _write_matrix(mask_path, self.column_names, self.missing_mask, float_fmt=False)


def _write_matrix(path, names, arr, float_fmt):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in arr:
            w.writerow(["" if (float_fmt and np.isnan(v)) else (repr(float(v)) if float_fmt else int(v))
                        for v in row])


def _reduce(vals: list[float], how: AggregationSpec) -> float:
    if how is AggregationSpec.First:
        return vals[0]
    if how is AggregationSpec.Last:
        return vals[-1]
    if how is AggregationSpec.Mean:
        return float(np.mean(vals))
    return float(np.median(vals))


def column_names(codes, spec: AggregationSpec) -> list[str]:
    spec = AggregationSpec(spec)
    if spec is AggregationSpec.FirstLast:
        return [n for c in codes for n in (f"{c}_first", f"{c}_last")]
    return list(codes)


def aggregate(store: EventStore, cohort: Cohort, protocol=None, spec=AggregationSpec.Last,
              window=Window.pretreatment, stay_h: float = 24.0, codes=None,
              strict: bool = False) -> DesignMatrix:
    """Aggregate each confounder's Measurement values per cohort patient.

    Patients without an observation in the window get NaN and a set mask bit.
    ``strict`` turns an unknown confounder code into an error instead of a
    warning.
    """
    spec = AggregationSpec(spec)
    window = Window(window)
    protocol = protocol or cohort.protocol
    codes = list(protocol.confounder_codes if codes is None else codes)
    if not len(cohort):
        raise ValueError("cohort is empty")
    for c in codes:
        if c not in store.vocabulary:
            if strict:
                raise UnknownCode(f"confounder code {c!r} never appears in the store")
            log.warning("confounder code %r never appears in the store", c)
    pos = {c: j for j, c in enumerate(codes)}
    names = column_names(codes, spec)
    width = 2 if spec is AggregationSpec.FirstLast else 1
    out = np.full((len(cohort), len(names)), np.nan)
    for i, row in enumerate(cohort.rows):
        if window is Window.pretreatment:
            hi = row.pretreatment_end(protocol.eligibility_window_h)
        elif window is Window.pre_inclusion:
            hi = row.t0_h
        else:
            hi = stay_h
        seen: dict[str, list[float]] = {}
        for ev in store[row.patient_id]:
            if ev.time_h >= hi:
                break
            if ev.kind is Kind.Measurement and ev.code in pos and ev.value is not None:
                seen.setdefault(ev.code, []).append(ev.value)
        for c, vals in seen.items():
            j = pos[c] * width
            if width == 2:
                out[i, j] = vals[0]
                out[i, j + 1] = vals[-1]
            else:
                out[i, j] = _reduce(vals, spec)
    return DesignMatrix(out, names, np.isnan(out), cohort.patient_ids)


@dataclass
class Imputer:
    column_names: list[str]
    medians: np.ndarray
    indicator: np.ndarray  # bool per column: forced indicator (missing among fit rows)


def fit_imputer(m: DesignMatrix, fit_rows) -> Imputer:
    """Per-column medians computed from ``fit_rows`` only."""
    rows = np.asarray(fit_rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("fit_rows is empty")
    sub = m.values[rows]
    miss = m.missing_mask[rows].astype(bool) | np.isnan(sub)
    medians = np.zeros(sub.shape[1])
    for j in range(sub.shape[1]):
        obs = sub[~miss[:, j], j]
        if obs.size:
            medians[j] = np.median(obs)
    return Imputer(list(m.column_names), medians, miss.any(axis=0))


def apply_imputer(imp: Imputer, m: DesignMatrix, rows=None) -> DesignMatrix:
    """Fill missing cells with fit medians and append ``<col>_missing`` indicators.

    Indicators are added for columns missing anywhere in the fit rows or in
    ``rows``. Apply once to all rows you need and slice afterwards to keep the
    column set consistent across splits.
    """
    if list(m.column_names) != imp.column_names:
        raise ColumnMismatch("design matrix columns differ from the imputer's")
    rows = np.arange(len(m)) if rows is None else np.asarray(rows, dtype=np.int64)
    vals = m.values[rows].copy()
    miss = m.missing_mask[rows].astype(bool) | np.isnan(vals)
    vals = np.where(miss, imp.medians[None, :], vals)
    add = imp.indicator | miss.any(axis=0)
    ind_names = [f"{c}_missing" for c, k in zip(imp.column_names, add) if k]
    ind = miss[:, add].astype(float)
    ids = [m.row_ids[i] for i in rows] if m.row_ids else []
    out_mask = np.hstack([miss, np.zeros_like(ind, dtype=bool)]).astype(np.uint8)
    return DesignMatrix(np.hstack([vals, ind]), list(m.column_names) + ind_names, out_mask, ids)


@dataclass
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return z * self.scale + self.mean


def fit_scaler(x: np.ndarray, fit_rows=None) -> Scaler:
    x = np.asarray(x, dtype=float)
    sub = x if fit_rows is None else x[np.asarray(fit_rows, dtype=np.int64)]
    mean = sub.mean(axis=0)
    sd = sub.std(axis=0)
    const = ~(sd > 0)
    # zero-variance columns pass through untouched
    mean = np.where(const, 0.0, mean)
    sd = np.where(const, 1.0, sd)
    return Scaler(mean, sd)


def standardize(m: DesignMatrix, fit_rows) -> tuple[DesignMatrix, Scaler]:
    sc = fit_scaler(m.values, fit_rows)
    return DesignMatrix(sc.transform(m.values), list(m.column_names), m.missing_mask, list(m.row_ids)), sc


def impute_and_scale(m: DesignMatrix, fit_rows, scale: bool = True) -> np.ndarray:
    """Imputed (and optionally standardized) float matrix for all rows, statistics from ``fit_rows``."""
    imp = fit_imputer(m, fit_rows)
    full = apply_imputer(imp, m)
    if not scale:
        return full.values
    return fit_scaler(full.values, fit_rows).transform(full.values)
