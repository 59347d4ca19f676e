"""PICOT cohort construction with explicit time-zero alignment."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ConfigError, EmptyCohort
from .events import EventStore, Kind


@dataclass(frozen=True)
class EligibilityFilter:
    """Keep patients whose last pre-T0 value of ``code`` lies in [min, max]."""

    code: str
    min: float = -math.inf
    max: float = math.inf


@dataclass(frozen=True)
class TrialProtocol:
    """Machine-readable target-trial definition.

    Confounders are read in ``[0, min(t_treat, t0 + eligibility_window_h))``.
    ``outcome_value`` switches the outcome from "event occurred within the
    horizon" to "value of the first outcome event within the horizon", for
    continuous-outcome simulations.
    """

    inclusion_code: str
    treatment_code: str
    eligibility_window_h: float = 24.0
    min_followup_h: float = 24.0
    outcome_code: str = "death"
    outcome_horizon_h: float = 672.0
    confounder_codes: tuple[str, ...] = ()
    cate_codes: tuple[str, ...] = ()
    filters: tuple[EligibilityFilter, ...] = ()
    outcome_value: bool = False

    def __post_init__(self):
        object.__setattr__(self, "confounder_codes", tuple(self.confounder_codes))
        object.__setattr__(self, "cate_codes", tuple(self.cate_codes))
        object.__setattr__(self, "filters", tuple(
            f if isinstance(f, EligibilityFilter) else EligibilityFilter(**f) for f in self.filters))
        for name in ("eligibility_window_h", "outcome_horizon_h"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.min_followup_h < 0:
            raise ConfigError("min_followup_h must be >= 0")
        if self.treatment_code == self.inclusion_code:
            raise ConfigError("treatment_code must differ from inclusion_code")
        if not self.outcome_horizon_h > self.eligibility_window_h:
            raise ConfigError("outcome_horizon_h must exceed eligibility_window_h")

    def with_window(self, window_h: float) -> TrialProtocol:
        return replace(self, eligibility_window_h=float(window_h))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["confounder_codes"] = list(self.confounder_codes)
        d["cate_codes"] = list(self.cate_codes)
        d["filters"] = [asdict(f) for f in self.filters]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrialProtocol:
        return cls(**d)


@dataclass(frozen=True)
class CohortRow:
    patient_id: str
    t0_h: float
    a: int
    t_treat_h: float | None
    y: float
    t_outcome_h: float | None

    def pretreatment_end(self, window_h: float) -> float:
        """Exclusive end of this patient's pre-treatment observation window."""
        end = self.t0_h + window_h
        if self.t_treat_h is not None:
            end = min(end, self.t_treat_h)
        return end


@dataclass
class FlowchartReport:
    stages: list[tuple[str, int, int]] = field(default_factory=list)

    def add(self, label: str, remaining: int):
        prev = self.stages[-1][1] if self.stages else remaining
        self.stages.append((label, remaining, prev - remaining))

    @property
    def initial(self) -> int:
        return self.stages[0][1]

    @property
    def final(self) -> int:
        return self.stages[-1][1]

    def to_json(self) -> list[dict]:
        return [{"stage": s, "remaining": r, "dropped": d} for s, r, d in self.stages]


@dataclass
class Cohort:
    rows: list[CohortRow]
    flowchart: FlowchartReport
    protocol: TrialProtocol

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def a(self) -> np.ndarray:
        return np.array([r.a for r in self.rows], dtype=np.int64)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.y for r in self.rows], dtype=float)

    @property
    def patient_ids(self) -> list[str]:
        return [r.patient_id for r in self.rows]

    @property
    def n_treated(self) -> int:
        return sum(r.a for r in self.rows)

    def mean_treatment_gap_h(self) -> float:
        """Mean inclusion-to-treatment delay among treated rows (0 if none)."""
        gaps = [r.t_treat_h - r.t0_h for r in self.rows if r.a]
        return float(np.mean(gaps)) if gaps else 0.0


def _first(seq, pred):
    for ev in seq:
        if pred(ev):
            return ev
    return None


def build_cohort(store: EventStore, protocol: TrialProtocol) -> Cohort:
    """Apply the protocol to every patient and record a selection flowchart.

    Stages: inclusion event present; optional eligibility filters; alive (no
    outcome event) until ``T0 + min_followup_h``.
    """
    p = protocol
    fc = FlowchartReport()
    fc.add("all patients", len(store))

    included = []
    for pid in store:
        seq = store[pid]
        inc = _first(seq, lambda ev: ev.code == p.inclusion_code)
        if inc is not None:
            included.append((pid, seq, inc.time_h))
    fc.add(f"has inclusion event {p.inclusion_code!r}", len(included))

    for flt in p.filters:
        kept = []
        for pid, seq, t0 in included:
            vals = [ev.value for ev in seq
                    if ev.code == flt.code and ev.time_h < t0 and ev.value is not None]
            if vals and flt.min <= vals[-1] <= flt.max:
                kept.append((pid, seq, t0))
        included = kept
        fc.add(f"{flt.code} in [{flt.min}, {flt.max}]", len(included))

    rows = []
    for pid, seq, t0 in included:
        early = _first(seq, lambda ev: ev.code == p.outcome_code and ev.kind is Kind.Outcome
                       and ev.time_h < t0 + p.min_followup_h)
        if early is not None:
            continue
        treat = _first(seq, lambda ev: ev.code == p.treatment_code
                       and t0 <= ev.time_h < t0 + p.eligibility_window_h)
        out = _first(seq, lambda ev: ev.code == p.outcome_code and ev.kind is Kind.Outcome
                     and t0 <= ev.time_h <= t0 + p.outcome_horizon_h)
        if p.outcome_value:
            if out is None or out.value is None:
                continue
            y = float(out.value)
        else:
            y = 1 if out is not None else 0
        rows.append(CohortRow(
            patient_id=pid,
            t0_h=t0,
            a=1 if treat is not None else 0,
            t_treat_h=treat.time_h if treat is not None else None,
            y=y,
            t_outcome_h=out.time_h if out is not None else None,
        ))
    label = f"no {p.outcome_code!r} before T0+{p.min_followup_h:g}h"
    if p.outcome_value:
        label += " and outcome observed"
    fc.add(label, len(rows))
    if not rows:
        raise EmptyCohort("no patient satisfies the protocol")
    return Cohort(rows, fc, p)


def sweep_eligibility(store: EventStore, protocol: TrialProtocol, windows_h) -> dict[float, Cohort]:
    windows = [float(w) for w in windows_h]
    if not windows or any(not w > 0 for w in windows):
        raise ConfigError("windows must be non-empty and positive")
    return {w: build_cohort(store, protocol.with_window(w)) for w in windows}


COHORT_HEADER = ("patient_id", "t0_h", "a", "t_treat_h", "y", "t_outcome_h")


def _opt(x):
    return "" if x is None else repr(float(x))


def write_cohort_csv(cohort: Cohort, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COHORT_HEADER)
        for r in cohort.rows:
            y = repr(float(r.y)) if cohort.protocol.outcome_value else str(int(r.y))
            w.writerow([r.patient_id, repr(float(r.t0_h)), r.a, _opt(r.t_treat_h), y, _opt(r.t_outcome_h)])


def write_flowchart_json(cohort: Cohort, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cohort.flowchart.to_json(), fh, indent=2)
        fh.write("\n")
