"""Command-line entry point.

Usage: ``emula <command> --config run.json --out DIR [--seed N] [--jobs N] [--allow-bad-adjustment]``

Exit codes: 0 ok, 2 configuration error, 3 empty cohort, 4 estimation failure.
Every command writes ``report.json`` (resolved config, version, seeds and
results) plus ``timing.json``; only the latter varies between identical runs.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, plots
from ._accel import backend
from .cohort import build_cohort, write_cohort_csv, write_flowchart_json
from .config import COMMANDS, RunConfig, load_config
from .dag import validate_adjustment_set
from .diagnostics import balance_report, overlap_report, run_itb_sweep, run_vibration, shortcut_demo
from .errors import AdjustmentViolation, CohortError, ConfigError, EmulaError, EstimationError
from .estimators import EffectEstimate, write_estimates_csv
from .events import load_events, save_events
from .features import apply_imputer, fit_imputer
from .hte import run_hte
from .nuisance import Family, ModelSpec, in_sample_predict
from .pipeline import analysis_data, estimate
from .synthgen import generate

log = logging.getLogger("emula")

EXIT_OK, EXIT_CONFIG, EXIT_COHORT, EXIT_ESTIMATION = 0, 2, 3, 4


def _clean(obj):
    """JSON-safe copy: NaN becomes null, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, indent=2, allow_nan=False)
        fh.write("\n")


class Run:
    """Output directory, timings and the report being assembled."""

    def __init__(self, cfg: RunConfig, out: Path, n_jobs: int):
        self.cfg = cfg
        self.out = out
        self.n_jobs = n_jobs
        self.timing: dict[str, float] = {}
        self.report: dict = {"tool": "emula", "version": __version__, "backend": backend(),
                             "command": cfg.command, "config": cfg.to_json(),
                             "seeds": {"run": cfg.seed}}
        if cfg.scenario is not None:
            self.report["seeds"]["scenario"] = cfg.scenario.seed
        out.mkdir(parents=True, exist_ok=True)

    def step(self, name):
        run = self

        class _Timer:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                run.timing[name] = time.perf_counter() - self.t
                log.info("%s took %.2fs", name, run.timing[name])

        return _Timer()

    def path(self, name) -> Path:
        return self.out / name

    def finish(self) -> None:
        write_json(self.report, self.path("report.json"))
        write_json(self.timing, self.path("timing.json"))


def _load_data(run: Run):
    cfg = run.cfg
    with run.step("load"):
        if cfg.scenario is not None:
            store, gt = generate(cfg.scenario)
            run.report["oracle"] = {"ate": gt.ate_oracle, "att": gt.att_oracle()}
        else:
            store = load_events(cfg.events_csv)
    return store


def _adjustment_gate(run: Run, allow_bad: bool) -> None:
    cfg = run.cfg
    if cfg.dag is None:
        return
    bad = validate_adjustment_set(cfg.dag, cfg.protocol.confounder_codes)
    run.report["adjustment_violations"] = [[n, r.value] for n, r in bad]
    if bad and not allow_bad:
        raise AdjustmentViolation([(n, r.value) for n, r in bad])
    for n, r in bad:
        log.warning("adjusting for %s although it is a %s (--allow-bad-adjustment)", n, r.value)


# --- commands -----------------------------------------------------------------

def cmd_simulate(run: Run, args) -> int:
    spec = run.cfg.scenario
    with run.step("simulate"):
        store, gt = generate(spec)
    save_events(store, run.path("events.csv"))
    gt.write_csv(run.path("ground_truth.csv"))
    oracle = {"ate_oracle": gt.ate_oracle, "att_oracle": gt.att_oracle()}
    write_json(oracle, run.path("oracle.json"))
    run.report["results"] = {**oracle, "n_patients": len(store), "n_events": store.n_events()}
    return EXIT_OK


def _overlap(run: Run, data) -> dict:
    """In-sample linear propensity for the overlap and balance diagnostics."""
    spec = ModelSpec(Family.LogisticL2, c=1.0)
    e_hat = in_sample_predict(spec, data.x, data.a)
    ov = overlap_report(e_hat, data.a)
    ov.write_csv(run.path("overlap.csv"))
    plots.save(plots.overlap_histogram(ov.edges, ov.treated_counts, ov.control_counts), run.path("overlap.svg"))
    filled = apply_imputer(fit_imputer(data.x, np.arange(len(data))), data.x)
    bal = balance_report(filled.values, data.a, e_hat, run.cfg.estimation.clip, filled.column_names)
    bal.write_csv(run.path("balance.csv"))
    return {"ntv": ov.ntv, "treated_fraction": ov.treated_fraction, "balance": bal.to_json()}


def cmd_estimate(run: Run, args) -> int:
    cfg = run.cfg
    store = _load_data(run)
    _adjustment_gate(run, args.allow_bad_adjustment)
    with run.step("cohort"):
        cohort = build_cohort(store, cfg.protocol)
    write_flowchart_json(cohort, run.path("flowchart.json"))
    write_cohort_csv(cohort, run.path("cohort.csv"))
    with run.step("features"):
        data = analysis_data(store, cohort, cfg.estimation.aggregation)
    with run.step("overlap"):
        run.report["overlap"] = _overlap(run, data)
    results, specs = [], {}
    failed = False
    for name in cfg.estimators:
        c = replace(cfg.estimation, estimator=name)
        with run.step(f"estimate:{name}"):
            try:
                r, s = estimate(data, c, run.n_jobs)
                specs[name] = s.to_json()
            except (EstimationError, ValueError) as exc:
                log.error("%s failed: %s", name, exc)
                failed = True
                r = EffectEstimate(f"{name}/{c.nuisance}", c.estimand, n_boot=c.n_boot,
                                   choices={"aggregation": c.aggregation.value, "nuisance": c.nuisance,
                                            "window_h": cfg.protocol.eligibility_window_h, "seed": c.seed},
                                   error=f"{type(exc).__name__}: {exc}")
        results.append(r)
    write_estimates_csv(results, run.path("estimates.csv"))
    write_json([r.to_json() for r in results], run.path("estimates.json"))
    plots.save(plots.forest_plot([(r.estimator_id, r.point, r.ci_low, r.ci_high) for r in results],
                                 title="effect estimates"), run.path("estimates.svg"))
    run.report["cohort"] = {"n": len(cohort), "n_treated": cohort.n_treated}
    run.report["nuisance_specs"] = specs
    run.report["results"] = [r.to_json() for r in results]
    return EXIT_ESTIMATION if failed else EXIT_OK


def cmd_vibrate(run: Run, args) -> int:
    cfg = run.cfg
    store = _load_data(run)
    _adjustment_gate(run, args.allow_bad_adjustment)
    with run.step("cohort"):
        cohort = build_cohort(store, cfg.protocol)
    with run.step("grid"):
        grid = run_vibration(store, cfg.protocol, cfg.grid, n_jobs=run.n_jobs, cohort=cohort)
    grid.write_csv(run.path("vibration.csv"))
    write_json(grid.to_json(), run.path("vibration.json"))
    rows = [(f"{r.estimator_id} {r.choices.get('aggregation', '')}", r.point, r.ci_low, r.ci_high)
            for r in grid.cells]
    plots.save(plots.forest_plot(rows, title="vibration analysis"), run.path("forest_plot.svg"))
    run.report["cohort"] = {"n": len(cohort), "n_treated": cohort.n_treated}
    run.report["results"] = grid.to_json()
    return EXIT_OK


def cmd_itb_sweep(run: Run, args) -> int:
    cfg = run.cfg
    store = _load_data(run)
    _adjustment_gate(run, args.allow_bad_adjustment)
    with run.step("sweep"):
        rep = run_itb_sweep(store, cfg.protocol, cfg.windows, cfg.estimation, n_jobs=run.n_jobs)
    rep.write_csv(run.path("itb_sweep.csv"))
    write_json(rep.to_json(), run.path("itb_sweep.json"))
    rows = [(f"window {w:g}h (gap {g:.1f}h)", e.point, e.ci_low, e.ci_high)
            for w, e, g in zip(rep.windows_h, rep.estimates, rep.mean_gap_h)]
    plots.save(plots.forest_plot(rows, title="eligibility window sweep"), run.path("itb_sweep.svg"))
    run.report["results"] = rep.to_json()
    return EXIT_ESTIMATION if any(not e.ok for e in rep.estimates) else EXIT_OK


def cmd_hte(run: Run, args) -> int:
    cfg = run.cfg
    store = _load_data(run)
    _adjustment_gate(run, args.allow_bad_adjustment)
    with run.step("hte"):
        res = run_hte(store, cfg.protocol, cfg.estimation, cfg.alpha, cfg.groups or None,
                      cfg.test_size, run.n_jobs)
    write_json(res.model.to_json(), run.path("cate_model.json"))
    res.report.write_csv(run.path("subgroups.csv"))
    res.write_predictions(run.path("cate_predictions.csv"))
    plots.save(plots.box_plot(res.report.boxes), run.path("subgroups.svg"))
    run.report["results"] = {"model": res.model.to_json(), "subgroups": res.report.to_json(),
                             "n_train": int(res.train_rows.size), "n_test": int(res.test_rows.size)}
    return EXIT_OK


def cmd_shortcut_demo(run: Run, args) -> int:
    cfg = run.cfg
    store = _load_data(run)
    with run.step("shortcut"):
        aucs = shortcut_demo(store, cfg.protocol, cfg.seed, cfg.stay_h, n_jobs=run.n_jobs)
    write_json(aucs, run.path("shortcut_auc.json"))
    with open(run.path("shortcut_auc.csv"), "w", encoding="utf-8") as fh:
        fh.write("metric,auc\n")
        for k, v in aucs.items():
            fh.write(f"{k},{v!r}\n")
    plots.save(plots.bar_chart(aucs, "ROC AUC"), run.path("shortcut_auc.svg"))
    run.report["results"] = aucs
    return EXIT_OK


HANDLERS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "vibrate": cmd_vibrate,
    "itb-sweep": cmd_itb_sweep,
    "hte": cmd_hte,
    "shortcut-demo": cmd_shortcut_demo,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emula", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"emula {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        s.add_argument("--jobs", type=int, default=1, help="worker count")
        s.add_argument("--allow-bad-adjustment", action="store_true",
                       help="run even if the DAG flags a confounder as mediator, collider or instrument")
    return p


def _setup_logging():
    level = os.environ.get("EMULA_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, args.command, args.seed)
        run = Run(cfg, Path(args.out), args.jobs)
        code = HANDLERS[args.command](run, args)
        run.finish()
        return code
    except AdjustmentViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CohortError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COHORT
    except (EstimationError, EmulaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
