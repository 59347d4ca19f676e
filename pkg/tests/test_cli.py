import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from emula.cli import main
from emula.events import load_events

SMALL_EST = {"n_boot": 3, "search": False, "forest": {"n_trees": 5, "max_depth": 4}}

CONFIGS = {
    "simulate": {"scenario": {"name": "LinearConfounding", "n": 300}, "seed": 3},
    "estimate": {"scenario": {"name": "LinearConfounding", "n": 400, "seed": 3},
                 "estimators": ["IPW", "DML", "PSM"], "estimation": SMALL_EST},
    "vibrate": {"scenario": {"name": "LinearConfounding", "n": 300, "seed": 1},
                "grid": {"aggregations": ["Last"], "estimators": ["IPW", "AIPW"], "nuisances": ["linear", "forest"]},
                "estimation": SMALL_EST},
    "itb-sweep": {"scenario": {"name": "ImmortalTime", "n": 600, "seed": 1}, "estimation": SMALL_EST},
    "hte": {"scenario": {"name": "HeterogeneousLinear", "n": 600, "seed": 1}, "estimation": {"search": False}},
    "shortcut-demo": {"scenario": {"name": "Shortcut", "n": 600, "seed": 1}},
}

OUTPUTS = {
    "simulate": ["events.csv", "ground_truth.csv", "oracle.json"],
    "estimate": ["flowchart.json", "cohort.csv", "overlap.csv", "overlap.svg", "balance.csv",
                 "estimates.csv", "estimates.json", "estimates.svg"],
    "vibrate": ["vibration.csv", "vibration.json", "forest_plot.svg"],
    "itb-sweep": ["itb_sweep.csv", "itb_sweep.json", "itb_sweep.svg"],
    "hte": ["cate_model.json", "subgroups.csv", "cate_predictions.csv", "subgroups.svg"],
    "shortcut-demo": ["shortcut_auc.json", "shortcut_auc.csv", "shortcut_auc.svg"],
}


def run_cli(tmp_path, command, cfg, *extra, name="out"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    return main([command, "--config", str(path), "--out", str(out), *extra]), out


@pytest.mark.parametrize("command", list(CONFIGS))
def test_every_command_writes_its_outputs(tmp_path, command):
    code, out = run_cli(tmp_path, command, CONFIGS[command])
    assert code == 0
    for f in OUTPUTS[command] + ["report.json", "timing.json"]:
        assert (out / f).is_file(), f
    rep = json.loads((out / "report.json").read_text())
    assert rep["command"] == command and rep["config"]["seed"] == rep["seeds"]["run"]


def test_simulate_oracle_recomputes(tmp_path):
    cfg = {"scenario": {"name": "LinearConfounding", "n": 300, "knobs": {"binary": 1}}, "seed": 4}
    code, out = run_cli(tmp_path, "simulate", cfg)
    assert code == 0
    with open(out / "ground_truth.csv") as fh:
        rows = list(csv.DictReader(fh))
    diff = np.array([float(r["y1"]) - float(r["y0"]) for r in rows])
    oracle = json.loads((out / "oracle.json").read_text())
    assert oracle["ate_oracle"] == float(np.mean(diff))
    assert len(set(diff.tolist())) > 1
    assert len(load_events(out / "events.csv")) == 300


def test_seed_override(tmp_path):
    _, a = run_cli(tmp_path, "simulate", CONFIGS["simulate"], "--seed", "9", name="a")
    rep = json.loads((a / "report.json").read_text())
    assert rep["config"]["scenario"]["seed"] == 9 and rep["seeds"]["run"] == 9


@pytest.mark.parametrize("cfg", [
    {"scenario": {"name": "LinearConfounding", "n": 50}, "bogus": 1},
    {"scenario": {"name": "LinearConfounding", "n": 50, "wat": 2}},
    {"scenario": {"name": "LinearConfounding", "n": 50}, "estimation": {"clip": 0.7}},
    {"scenario": {"name": "LinearConfounding", "n": 50}, "events_csv": "x.csv"},
    {"scenario": {"name": "Nope", "n": 50}},
    {"scenario": {"name": "LinearConfounding", "n": 50}, "estimators": ["Magic"]},
])
def test_config_errors_exit_2(tmp_path, cfg, capsys):
    code, _ = run_cli(tmp_path, "estimate", cfg)
    assert code == 2 and "error:" in capsys.readouterr().err


def test_unreadable_config_and_bad_jobs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["estimate", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["estimate", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2
    good = tmp_path / "g.json"
    good.write_text(json.dumps(CONFIGS["estimate"]))
    assert main(["estimate", "--config", str(good), "--out", str(tmp_path / "o"), "--jobs", "0"]) == 2


DAG_CFG = {
    "scenario": {"name": "LinearConfounding", "n": 400, "seed": 1, "knobs": {"collider": 1.0}},
    "protocol": {"inclusion_code": "admission", "treatment_code": "albumin", "outcome_code": "score",
                 "outcome_value": True, "confounder_codes": ["x1", "x2", "collider"]},
    "dag": {"edges": [["x1", "A"], ["x1", "Y"], ["x2", "A"], ["x2", "Y"], ["A", "Y"],
                      ["A", "collider"], ["Y", "collider"]], "treatment": "A", "outcome": "Y"},
    "estimators": ["GFormula"], "estimation": {"n_boot": 0, "search": False},
}


def test_dag_refusal_and_override(tmp_path, capsys):
    code, out = run_cli(tmp_path, "estimate", DAG_CFG)
    err = capsys.readouterr().err
    assert code == 2 and "Collider" in err and "collider" in err
    assert not (out / "estimates.csv").exists()
    code, out = run_cli(tmp_path, "estimate", DAG_CFG, "--allow-bad-adjustment", name="ok")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["adjustment_violations"] == [["collider", "Collider"]]


def test_empty_cohort_exit_3(tmp_path):
    cfg = dict(CONFIGS["estimate"])
    cfg["protocol"] = {"inclusion_code": "never_seen", "treatment_code": "albumin",
                       "outcome_code": "score", "outcome_value": True}
    code, _ = run_cli(tmp_path, "estimate", cfg)
    assert code == 3


def test_estimator_failure_exit_4(tmp_path):
    cfg = json.loads(json.dumps(CONFIGS["estimate"]))
    cfg["estimation"]["caliper_sd"] = 1e-12
    code, out = run_cli(tmp_path, "estimate", cfg)
    assert code == 4
    rows = list(csv.DictReader(open(out / "estimates.csv")))
    assert {r["estimator_id"].split("/")[0]: bool(r["error"]) for r in rows} == {"IPW": False, "DML": False, "PSM": True}


def test_events_csv_input(tmp_path):
    code, sim = run_cli(tmp_path, "simulate", CONFIGS["simulate"], name="sim")
    cfg = {"events_csv": str(sim / "events.csv"),
           "protocol": {"inclusion_code": "admission", "treatment_code": "albumin", "outcome_code": "score",
                        "outcome_value": True, "confounder_codes": [f"x{j}" for j in range(1, 11)]},
           "estimators": ["AIPW"], "estimation": SMALL_EST}
    code, out = run_cli(tmp_path, "estimate", cfg, name="est")
    assert code == 0 and "oracle" not in json.loads((out / "report.json").read_text())


def test_entry_point_subprocess(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(CONFIGS["simulate"]))
    r = subprocess.run([sys.executable, "-m", "emula.cli", "simulate", "--config", str(path),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    v = subprocess.run([sys.executable, "-m", "emula.cli", "--version"], capture_output=True, text=True)
    assert v.stdout.startswith("emula ")
