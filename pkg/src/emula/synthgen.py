"""Synthetic data-generating processes with counterfactual ground truth.

Every scenario draws all randomness from one ``numpy.random.Generator`` seeded
by ``ScenarioSpec.seed`` in a fixed order, so a spec maps to exactly one
event store and ground truth.

Event conventions shared by the scenarios:

* ``admission`` (Admission) at t=0 for every patient;
* covariates ``x1 .. xd`` as Measurement events;
* treatment ``albumin`` (Drug);
* binary outcome ``death`` (Outcome) with its time, continuous outcome
  ``score`` (Outcome) carrying the value.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from .cohort import TrialProtocol
from .errors import BadSpec
from .events import EventRecord, EventStore, Kind

TREATMENT_CODE = "albumin"
INCLUSION_CODE = "crystalloids"


class Scenario(str, Enum):
    LinearConfounding = "LinearConfounding"
    NonlinearConfounding = "NonlinearConfounding"
    ImmortalTime = "ImmortalTime"
    SelectionBias = "SelectionBias"
    Shortcut = "Shortcut"
    HeterogeneousLinear = "HeterogeneousLinear"


_COMMON = {
    "confounding": 1.0,      # norm of the treatment coefficient vector
    "outcome": 1.0,          # norm of the prognostic coefficient vector
    "noise": 1.0,            # outcome noise scale
    "treat_intercept": 0.0,
    "binary": 0.0,           # 1 -> threshold the latent outcome at zero
    "collider": 0.0,         # >0 emits a `collider` measurement driven by a and y
}

DEFAULT_KNOBS: dict[Scenario, dict] = {
    Scenario.LinearConfounding: dict(_COMMON),
    Scenario.NonlinearConfounding: {**_COMMON, "treat_intercept": -1.0, "nonlinearity": 1.0},
    Scenario.HeterogeneousLinear: dict(_COMMON),
    Scenario.Shortcut: {**_COMMON, "binary": 1.0, "marker_prognostic": 0.3, "marker_noise": 0.3},
    Scenario.ImmortalTime: {
        "death_rate": 0.026,          # hazard scale; cumulative hazard is rate * t ** shape
        "death_shape": 0.5,           # Weibull shape; < 1 concentrates deaths early
        "frailty": 2.0,               # log-hazard per unit of latent severity
        "delay_rate": 1.0 / 24.0,     # treatment delay rate (lambda), per hour
        "treat_prob": 0.95,           # probability a patient is ever prescribed treatment
        "severity_noise": 1.0,        # noise on the recorded severity score
    },
    Scenario.SelectionBias: {
        "confounding": 0.5,
        "outcome": 0.5,
        "severity_effect": 1.5,       # latent severity -> outcome (log-odds)
        "coding": 0.0,                # gamma: severity -> billing probability for controls
        "coding_intercept": 0.0,
    },
}

_DEFAULT_TAU = {
    Scenario.HeterogeneousLinear: (1.0, 2.0),
    Scenario.ImmortalTime: 0.0,
}


@dataclass(frozen=True)
class ScenarioSpec:
    name: Scenario
    n: int
    d: int = 10
    seed: int = 0
    tau: float | tuple[float, ...] = 2.0
    knobs: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            object.__setattr__(self, "name", Scenario(self.name))
        except ValueError:
            raise BadSpec(f"unknown scenario {self.name!r}") from None
        if int(self.n) < 2:
            raise BadSpec("n must be >= 2")
        if int(self.d) < 1:
            raise BadSpec("d must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise BadSpec("seed must be an unsigned 64-bit integer")
        if isinstance(self.tau, (list, tuple, np.ndarray)):
            object.__setattr__(self, "tau", tuple(float(t) for t in self.tau))
        else:
            object.__setattr__(self, "tau", float(self.tau))
        defaults = DEFAULT_KNOBS[self.name]
        unknown = set(self.knobs) - set(defaults)
        if unknown:
            raise BadSpec(f"unknown knobs for {self.name.value}: {sorted(unknown)}")
        merged = dict(defaults)
        merged.update(self.knobs)
        object.__setattr__(self, "knobs", merged)
        if merged.get("noise", 0.0) < 0:
            raise BadSpec("noise scale must be >= 0")

    @classmethod
    def default(cls, name, **kw) -> ScenarioSpec:
        name = Scenario(name)
        kw.setdefault("tau", _DEFAULT_TAU.get(name, 2.0))
        return cls(name=name, **kw)

    def knob(self, key):
        return self.knobs[key]

    def vector_knob(self, key) -> np.ndarray:
        """Coefficient vector: a scalar is spread evenly (norm = scalar), a list is used as-is."""
        v = self.knobs[key]
        if isinstance(v, (list, tuple, np.ndarray)):
            v = np.asarray(v, dtype=float)
            if v.shape != (self.d,):
                raise BadSpec(f"knob {key!r} has length {v.size}, expected d={self.d}")
            return v
        return float(v) * np.ones(self.d) / np.sqrt(self.d)

    def to_dict(self) -> dict:
        knobs = {k: (list(v) if isinstance(v, (list, tuple, np.ndarray)) else v)
                 for k, v in self.knobs.items()}
        tau = list(self.tau) if isinstance(self.tau, tuple) else self.tau
        return {"name": self.name.value, "n": int(self.n), "d": int(self.d),
                "seed": int(self.seed), "tau": tau, "knobs": knobs}

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioSpec:
        d = dict(d)
        if "tau" not in d:
            d["tau"] = _DEFAULT_TAU.get(Scenario(d["name"]), 2.0)
        return cls(**d)


@dataclass
class GroundTruth:
    patient_ids: list[str]
    a: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    e_true: np.ndarray
    observed: np.ndarray = None
    ate_oracle: float = field(init=False)

    def __post_init__(self):
        if self.observed is None:
            self.observed = np.ones(len(self.y0), dtype=bool)
        self.ate_oracle = oracle_ate(self)

    @property
    def y(self) -> np.ndarray:
        return np.where(self.a == 1, self.y1, self.y0)

    def att_oracle(self) -> float:
        t = self.a == 1
        return float(np.mean(self.y1[t] - self.y0[t]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["patient_id", "a", "y0", "y1", "e_true", "observed"])
            for i, pid in enumerate(self.patient_ids):
                w.writerow([pid, int(self.a[i]), repr(float(self.y0[i])), repr(float(self.y1[i])),
                            repr(float(self.e_true[i])), int(self.observed[i])])


def oracle_ate(gt: GroundTruth) -> float:
    """Sample average of ``y1 - y0``."""
    return float(np.mean(np.asarray(gt.y1, dtype=float) - np.asarray(gt.y0, dtype=float)))


# keeps every simulated propensity strictly inside (0.01, 0.99)
E_FLOOR = 0.02


def _propensity(logit) -> np.ndarray:
    return np.clip(expit(logit), E_FLOOR, 1 - E_FLOOR)


def _pids(n: int) -> list[str]:
    width = len(str(n - 1))
    return [f"p{i:0{width}d}" for i in range(n)]


def _codes(d: int) -> list[str]:
    return [f"x{j + 1}" for j in range(d)]


def _tau_effect(spec: ScenarioSpec, x: np.ndarray) -> np.ndarray:
    """Per-patient structural effect tau(x) on the latent outcome scale."""
    tau = spec.tau
    if isinstance(tau, tuple):
        if spec.name is not Scenario.HeterogeneousLinear:
            raise BadSpec("vector tau is only valid for HeterogeneousLinear")
        if not 1 <= len(tau) <= spec.d + 1:
            raise BadSpec(f"tau must have between 1 and d+1={spec.d + 1} entries")
        coef = np.asarray(tau[1:])
        return tau[0] + x[:, :coef.size] @ coef
    return np.full(x.shape[0], tau)


def gen_tabular(spec: ScenarioSpec) -> tuple[EventStore, GroundTruth]:
    """Baseline-confounding scenarios: one measurement per covariate, then treatment, then outcome.

    Timeline per patient: admission at 0 (the inclusion event), covariates in
    [0, 2) h, treatment in [2, 12) h, death in [24, 672] h for binary outcomes.
    """
    if spec.name not in (Scenario.LinearConfounding, Scenario.NonlinearConfounding,
                         Scenario.HeterogeneousLinear, Scenario.Shortcut):
        raise BadSpec(f"gen_tabular does not handle {spec.name.value}")
    n, d = spec.n, spec.d
    rng = np.random.default_rng(spec.seed)
    beta_a = spec.vector_knob("confounding")
    beta_y = spec.vector_knob("outcome")
    sigma = spec.knob("noise")
    binary = bool(spec.knob("binary"))

    x = rng.standard_normal((n, d))
    e = _propensity(spec.knob("treat_intercept") + x @ beta_a)
    a = (rng.random(n) < e).astype(np.int64)
    # logistic noise makes a per-arm logistic model exact for the binary variant
    eps = rng.logistic(size=n) if binary else rng.standard_normal(n)
    base = x @ beta_y
    if spec.name is Scenario.NonlinearConfounding:
        u = np.ones(d) / np.sqrt(d)
        # (x.u)^2 = sum of squares and pairwise products, scaled
        base = base + spec.knob("nonlinearity") * (x @ u) ** 2
    lat0 = base + sigma * eps
    lat1 = lat0 + _tau_effect(spec, x)
    if binary:
        y0 = (lat0 > 0).astype(float)
        y1 = (lat1 > 0).astype(float)
    else:
        y0, y1 = lat0, lat1
    y = np.where(a == 1, y1, y0)

    t_meas = rng.uniform(0.0, 2.0, size=(n, d))
    t_treat = rng.uniform(2.0, 12.0, size=n)
    t_death = rng.uniform(24.0, 672.0, size=n)
    collider = None
    if spec.knob("collider"):
        collider = spec.knob("collider") * (a + y) + rng.standard_normal(n)
        t_coll = rng.uniform(0.0, 2.0, size=n)

    marker = None
    if spec.name is Scenario.Shortcut:
        t0 = rng.uniform(1.0, 3.0, size=n)
        t_meas = t_meas * (t0[:, None] / 2.0)          # all baseline covariates before T0
        t_treat = t0 + rng.uniform(0.5, 2.0, size=n)
        m_pre = spec.knob("marker_prognostic") * base + rng.standard_normal(n)
        lat_obs = np.where(a == 1, lat1, lat0)
        m_post = lat_obs + spec.knob("marker_noise") * rng.standard_normal(n)
        t_pre = t0 * rng.uniform(0.5, 1.0, size=n)
        t_post = t_treat + rng.uniform(2.0, 8.0, size=n)
        marker = (m_pre, t_pre, m_post, t_post)

    pids = _pids(n)
    codes = _codes(d)
    events = []
    for i, pid in enumerate(pids):
        events.append(EventRecord(pid, 0.0, Kind.Admission, "admission"))
        for j in range(d):
            events.append(EventRecord(pid, float(t_meas[i, j]), Kind.Measurement, codes[j], float(x[i, j])))
        if marker is not None:
            events.append(EventRecord(pid, float(t0[i]), Kind.Drug, INCLUSION_CODE))
            events.append(EventRecord(pid, float(marker[1][i]), Kind.Measurement, "lactate", float(marker[0][i])))
            events.append(EventRecord(pid, float(marker[3][i]), Kind.Measurement, "lactate", float(marker[2][i])))
        if collider is not None:
            events.append(EventRecord(pid, float(t_coll[i]), Kind.Measurement, "collider", float(collider[i])))
        if a[i]:
            events.append(EventRecord(pid, float(t_treat[i]), Kind.Drug, TREATMENT_CODE))
        if binary:
            if y[i] == 1:
                events.append(EventRecord(pid, float(t_death[i]), Kind.Outcome, "death"))
        else:
            events.append(EventRecord(pid, 600.0, Kind.Outcome, "score", float(y[i])))
    return EventStore(events), GroundTruth(pids, a, y0, y1, e)


def gen_immortal_time(spec: ScenarioSpec) -> tuple[EventStore, GroundTruth]:
    """Null-effect scenario where treatment can only be observed in survivors.

    A latent severity drives an exponential death time. Treatment is
    prescribed with probability ``treat_prob`` after an exponential delay and
    materializes only if the patient is still alive at that moment. The
    recorded ``severity`` is a noisy version of the latent one; ``x2 .. xd``
    are pure-noise covariates.
    """
    if spec.name is not Scenario.ImmortalTime:
        raise BadSpec("gen_immortal_time requires the ImmortalTime scenario")
    if isinstance(spec.tau, tuple) or spec.tau != 0.0:
        raise BadSpec("ImmortalTime has a null structural effect; tau must be 0")
    n, d = spec.n, spec.d
    rng = np.random.default_rng(spec.seed)
    k = spec.knobs
    if k["delay_rate"] <= 0 or k["death_rate"] <= 0 or k["death_shape"] <= 0:
        raise BadSpec("rates must be > 0")
    if not 0 < k["treat_prob"] < 1:
        raise BadSpec("treat_prob must lie in (0, 1)")

    severity = rng.standard_normal(n)
    # cumulative hazard death_rate * exp(frailty * S) * t ** death_shape
    rate = k["death_rate"] * np.exp(k["frailty"] * severity)
    t_death = (rng.standard_exponential(n) / rate) ** (1.0 / k["death_shape"])
    prescribed = rng.random(n) < k["treat_prob"]
    t_delay = rng.exponential(1.0 / k["delay_rate"], size=n)
    recorded = severity + k["severity_noise"] * rng.standard_normal(n)
    extra = rng.standard_normal((n, d - 1))
    treated = prescribed & (t_delay < t_death)

    y = (t_death <= 672.0).astype(float)
    pids = _pids(n)
    events = []
    for i, pid in enumerate(pids):
        events.append(EventRecord(pid, 0.0, Kind.Admission, "admission"))
        events.append(EventRecord(pid, 0.0, Kind.Drug, INCLUSION_CODE))
        events.append(EventRecord(pid, 0.0, Kind.Measurement, "severity", float(recorded[i])))
        for j in range(d - 1):
            events.append(EventRecord(pid, 0.0, Kind.Measurement, f"x{j + 2}", float(extra[i, j])))
        if treated[i]:
            events.append(EventRecord(pid, float(t_delay[i]), Kind.Drug, TREATMENT_CODE))
        events.append(EventRecord(pid, float(t_death[i]), Kind.Outcome, "death"))
    e = np.full(n, k["treat_prob"])
    return EventStore(events), GroundTruth(pids, treated.astype(np.int64), y, y.copy(), e)


def gen_selection_bias(spec: ScenarioSpec) -> tuple[EventStore, GroundTruth]:
    """Cohort-defining billing code missing not at random.

    Treated patients are always coded. Controls are coded with probability
    ``expit(coding_intercept + coding * severity)``, where ``severity`` is
    latent and raises mortality. Uncoded patients are absent from the store.
    """
    if spec.name is not Scenario.SelectionBias:
        raise BadSpec("gen_selection_bias requires the SelectionBias scenario")
    if isinstance(spec.tau, tuple):
        raise BadSpec("SelectionBias takes a scalar tau")
    n, d = spec.n, spec.d
    rng = np.random.default_rng(spec.seed)
    k = spec.knobs
    beta_a = spec.vector_knob("confounding")
    beta_y = spec.vector_knob("outcome")

    x = rng.standard_normal((n, d))
    severity = rng.standard_normal(n)
    e = _propensity(x @ beta_a)
    a = (rng.random(n) < e).astype(np.int64)
    lat0 = x @ beta_y + k["severity_effect"] * severity + rng.logistic(size=n)
    y0 = (lat0 > 0).astype(float)
    y1 = (lat0 + spec.tau > 0).astype(float)
    y = np.where(a == 1, y1, y0)
    p_code = np.where(a == 1, 1.0, expit(k["coding_intercept"] + k["coding"] * severity))
    coded = rng.random(n) < p_code
    t_meas = rng.uniform(0.0, 2.0, size=(n, d))
    t_treat = rng.uniform(2.0, 12.0, size=n)
    t_death = rng.uniform(24.0, 672.0, size=n)

    pids = _pids(n)
    codes = _codes(d)
    events = []
    for i, pid in enumerate(pids):
        if not coded[i]:
            continue
        events.append(EventRecord(pid, 0.0, Kind.Admission, "admission"))
        events.append(EventRecord(pid, 0.0, Kind.Procedure, "sepsis_billing"))
        for j in range(d):
            events.append(EventRecord(pid, float(t_meas[i, j]), Kind.Measurement, codes[j], float(x[i, j])))
        if a[i]:
            events.append(EventRecord(pid, float(t_treat[i]), Kind.Drug, TREATMENT_CODE))
        if y[i] == 1:
            events.append(EventRecord(pid, float(t_death[i]), Kind.Outcome, "death"))
    return EventStore(events), GroundTruth(pids, a, y0, y1, e, observed=coded)


def generate(spec: ScenarioSpec) -> tuple[EventStore, GroundTruth]:
    """Dispatch on the scenario name."""
    if spec.name is Scenario.ImmortalTime:
        return gen_immortal_time(spec)
    if spec.name is Scenario.SelectionBias:
        return gen_selection_bias(spec)
    return gen_tabular(spec)


def default_protocol(spec: ScenarioSpec) -> TrialProtocol:
    """Protocol matching a scenario's event conventions."""
    codes = tuple(_codes(spec.d))
    binary_out = spec.name in (Scenario.ImmortalTime, Scenario.SelectionBias) or bool(spec.knobs.get("binary"))
    outcome = dict(outcome_code="death") if binary_out else dict(outcome_code="score", outcome_value=True)
    if spec.name is Scenario.ImmortalTime:
        return TrialProtocol(inclusion_code=INCLUSION_CODE, treatment_code=TREATMENT_CODE,
                             confounder_codes=("severity",) + codes[1:], **outcome)
    if spec.name is Scenario.SelectionBias:
        return TrialProtocol(inclusion_code="sepsis_billing", treatment_code=TREATMENT_CODE,
                             confounder_codes=codes, **outcome)
    if spec.name is Scenario.Shortcut:
        return TrialProtocol(inclusion_code=INCLUSION_CODE, treatment_code=TREATMENT_CODE,
                             confounder_codes=codes + ("lactate",), **outcome)
    cate = ("x1",) if spec.name is Scenario.HeterogeneousLinear else ()
    return TrialProtocol(inclusion_code="admission", treatment_code=TREATMENT_CODE,
                         confounder_codes=codes, cate_codes=cate, **outcome)
