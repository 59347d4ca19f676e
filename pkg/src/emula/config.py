"""JSON run configuration: validation, defaults and the resolved echo written to reports.

A config is one JSON object. Keys by command:

- every command: ``seed``; data as either ``scenario`` (a synthetic spec) or
  ``events_csv`` (path to an event log); ``protocol`` (defaults to the
  scenario's own protocol); ``dag`` (optional adjustment check)
- ``estimate``: ``estimators`` (list), ``estimation`` (shared options)
- ``vibrate``: ``grid`` with ``aggregations``, ``estimators``, ``nuisances``; ``estimation``
- ``itb-sweep``: ``windows``; ``estimation``
- ``hte``: ``alpha``, ``test_size``, ``groups`` ({name: {code, threshold}}); ``estimation``
- ``shortcut-demo``: ``stay_h``

Unknown keys anywhere are rejected before any computation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .cohort import EligibilityFilter, TrialProtocol
from .dag import CausalDag
from .diagnostics import GridConfig
from .errors import ConfigError
from .hte import SubgroupRule
from .pipeline import ESTIMATORS, EstimationConfig
from .synthgen import ScenarioSpec, default_protocol

COMMANDS = ("simulate", "estimate", "vibrate", "itb-sweep", "hte", "shortcut-demo")

_COMMON = {"seed", "scenario", "events_csv", "protocol", "dag"}
_ALLOWED = {
    "simulate": {"seed", "scenario"},
    "estimate": _COMMON | {"estimators", "estimation"},
    "vibrate": _COMMON | {"grid", "estimation"},
    "itb-sweep": _COMMON | {"windows", "estimation"},
    "hte": _COMMON | {"alpha", "test_size", "groups", "estimation"},
    "shortcut-demo": _COMMON | {"stay_h"},
}
_SCENARIO_KEYS = {"name", "n", "d", "seed", "tau", "knobs"}
_PROTOCOL_KEYS = set(TrialProtocol.__dataclass_fields__)
_FILTER_KEYS = set(EligibilityFilter.__dataclass_fields__)
_DAG_KEYS = {"nodes", "edges", "treatment", "outcome"}
_GRID_KEYS = {"aggregations", "estimators", "nuisances"}
_GROUP_KEYS = {"code", "threshold"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


@dataclass
class RunConfig:
    command: str
    seed: int
    scenario: ScenarioSpec | None = None
    events_csv: str | None = None
    protocol: TrialProtocol | None = None
    dag: CausalDag | None = None
    estimators: tuple = ()
    estimation: EstimationConfig = field(default_factory=EstimationConfig)
    grid: GridConfig | None = None
    windows: tuple = (24.0, 48.0, 72.0)
    alpha: float = 1.0
    test_size: float = 0.2
    groups: dict = field(default_factory=dict)
    stay_h: float = 24.0

    def to_json(self) -> dict:
        """Every resolved value, defaults included."""
        c = self.command
        out: dict = {"command": c, "seed": self.seed}
        if self.scenario is not None:
            out["scenario"] = self.scenario.to_dict()
        if c == "simulate":
            return out
        if self.events_csv is not None:
            out["events_csv"] = self.events_csv
        out["protocol"] = self.protocol.to_dict()
        if self.dag is not None:
            out["dag"] = self.dag.to_json()
        if c != "shortcut-demo":
            out["estimation"] = self.estimation.to_json()
        if c == "estimate":
            out["estimators"] = list(self.estimators)
        elif c == "vibrate":
            out["grid"] = self.grid.to_json()
        elif c == "itb-sweep":
            out["windows"] = list(self.windows)
        elif c == "hte":
            out.update(alpha=self.alpha, test_size=self.test_size,
                       groups={k: {"code": g.code, "threshold": g.threshold} for k, g in self.groups.items()})
        else:
            out["stay_h"] = self.stay_h
        return out


def _seed(v) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or not 0 <= v < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return v


def _float(v, where) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number")
    return float(v)


def parse_config(raw: dict, command: str, seed_override: int | None = None) -> RunConfig:
    """Validate ``raw`` for ``command`` and fill in every default."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    _check_keys(raw, _ALLOWED[command], "config")
    seed = _seed(seed_override if seed_override is not None else raw.get("seed", 0))
    cfg = RunConfig(command, seed)

    if "scenario" in raw:
        sc = dict(raw["scenario"])
        _check_keys(sc, _SCENARIO_KEYS, "scenario")
        if command == "simulate":
            sc["seed"] = seed
        try:
            cfg.scenario = ScenarioSpec.from_dict(sc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None
    if command == "simulate":
        if cfg.scenario is None:
            raise ConfigError("simulate needs a 'scenario'")
        return cfg

    if ("scenario" in raw) == ("events_csv" in raw):
        raise ConfigError("give exactly one of 'scenario' or 'events_csv'")
    if "events_csv" in raw:
        if not isinstance(raw["events_csv"], str):
            raise ConfigError("events_csv must be a path string")
        cfg.events_csv = raw["events_csv"]

    if "protocol" in raw:
        p = dict(raw["protocol"])
        _check_keys(p, _PROTOCOL_KEYS, "protocol")
        for f in p.get("filters", []):
            _check_keys(f, _FILTER_KEYS, "protocol.filters[]")
        try:
            cfg.protocol = TrialProtocol.from_dict(p)
        except TypeError as exc:
            raise ConfigError(f"invalid protocol: {exc}") from None
    elif cfg.scenario is not None:
        cfg.protocol = default_protocol(cfg.scenario)
    else:
        raise ConfigError("'protocol' is required with events_csv")

    if "dag" in raw:
        _check_keys(raw["dag"], _DAG_KEYS, "dag")
        cfg.dag = CausalDag.from_json(raw["dag"])

    if command == "shortcut-demo":
        cfg.stay_h = _float(raw.get("stay_h", 24.0), "stay_h")
        return cfg

    est = dict(raw.get("estimation", {}))
    _check_keys(est, EstimationConfig.__dataclass_fields__, "estimation")
    est["seed"] = seed
    if command == "hte":
        est.setdefault("estimator", "DML")
    try:
        cfg.estimation = EstimationConfig.from_json(est)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid estimation options: {exc}") from None

    try:
        if command == "estimate":
            names = raw.get("estimators", [cfg.estimation.estimator.value])
            if not isinstance(names, list) or not names:
                raise ConfigError("estimators must be a non-empty list")
            cfg.estimators = tuple(EstimationConfig(estimator=n).estimator.value for n in names)
        elif command == "vibrate":
            g = raw.get("grid", {})
            _check_keys(g, _GRID_KEYS, "grid")
            cfg.grid = GridConfig(base=cfg.estimation, **g)
        elif command == "itb-sweep":
            w = raw.get("windows", [24, 48, 72])
            cfg.windows = tuple(_float(v, "windows[]") for v in w)
            if not cfg.windows or any(b <= a for a, b in zip(cfg.windows, cfg.windows[1:])):
                raise ConfigError("windows must be non-empty and strictly increasing")
        elif command == "hte":
            cfg.alpha = _float(raw.get("alpha", 1.0), "alpha")
            cfg.test_size = _float(raw.get("test_size", 0.2), "test_size")
            if not 0 < cfg.test_size < 1:
                raise ConfigError("test_size must lie in (0, 1)")
            groups = raw.get("groups")
            if groups is None:
                cfg.groups = {c: SubgroupRule(c) for c in cfg.protocol.cate_codes}
            else:
                _check_keys(groups, groups.keys(), "groups")
                for name, g in groups.items():
                    _check_keys(g, _GROUP_KEYS, f"groups.{name}")
                cfg.groups = {k: SubgroupRule(g["code"], _float(g.get("threshold", 0.0), "threshold"))
                              for k, g in groups.items()}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path, command: str, seed_override: int | None = None) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return parse_config(raw, command, seed_override)


__all__ = ["COMMANDS", "RunConfig", "parse_config", "load_config", "ESTIMATORS"]
