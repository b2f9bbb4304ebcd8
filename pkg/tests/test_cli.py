from __future__ import annotations

import csv
import json
import os

import numpy as np
import pytest

from voucherbounds.cli import main

CONFIG = {
    "program": {
        "voucher_schools": [["s1", 2000], ["s2", 6000]],
        "tau_sq": 4000,
        "gov_cost": 5000,
        "admin_cost": 200,
    },
    "shares": {
        "without": {"g": 0.90, "n": 0.02, "s1": 0.05, "s2": 0.03},
        "with": {"g": 0.30, "n": 0.01, "s1": 0.40, "s2": 0.29},
        "n_without": 730,
        "n_with": 1090,
    },
    "inference": {"subsamples": 20, "seed": 4},
    "model": {
        "family": "L1",
        "school_effects": {"s1": 0.8, "s2": -0.4},
        "nonparticipating_effect": -1.2,
        "price_coef_mean": 0.0004,
    },
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(CONFIG))
    return str(path)


def test_bounds_json(config_path, tmp_path, capsys):
    out = tmp_path / "bounds.json"
    code = main(["bounds", "--config", config_path, "--param", "AB,AC,AS", "--out", str(out)])
    assert code == 0
    payload = json.loads(out.read_text())
    results = {r["param"]: r for r in payload["results"]}
    assert results["AC"]["lower"] == pytest.approx(-902.0, abs=1e-5)
    assert results["AC"]["upper"] == pytest.approx(-902.0, abs=1e-5)
    assert results["AB"]["status"] == "feasible"
    assert 0 <= results["AB"]["lower"] <= results["AB"]["upper"] <= 4000
    assert payload["manifest"]["version"]


def test_bounds_infeasible_exit_code(config_path, capsys):
    code = main(["bounds", "--config", config_path, "--spec", "o", "--param", "AB"])
    captured = capsys.readouterr()
    assert code == 2
    payload = json.loads(captured.out)
    assert payload["results"][0]["status"] == "infeasible"


def test_bounds_missing_config_exit_one(capsys):
    assert main(["bounds", "--config", "/nonexistent/x.json", "--param", "AB"]) == 1


def test_bounds_dump_lp(config_path, tmp_path):
    mps = tmp_path / "program.mps"
    out = tmp_path / "b.json"
    code = main([
        "bounds", "--config", config_path, "--param", "AB",
        "--dump-lp", str(mps), "--out", str(out),
    ])
    assert code == 0
    text = mps.read_text()
    assert text.startswith("NAME") and text.rstrip().endswith("ENDATA")


def test_sweep_tau_csv_and_svg(config_path, tmp_path):
    out = tmp_path / "sweep.csv"
    svg = tmp_path / "sweep.svg"
    code = main([
        "sweep-tau", "--config", config_path, "--from", "2000", "--to", "6000",
        "--step", "2000", "--out", str(out), "--svg", str(svg),
    ])
    assert code == 0
    rows = list(csv.DictReader(out.read_text().splitlines()))
    assert {r["param"] for r in rows} == {"AB", "AC", "AS", "dAB", "dAC", "dAS"}
    taus = {float(r["tau"]) for r in rows}
    assert taus == {2000.0, 4000.0, 6000.0}
    sq = [r for r in rows if float(r["tau"]) == 4000.0 and r["param"] == "dAB"][0]
    assert float(sq["lower"]) == pytest.approx(0.0, abs=1e-7)
    assert float(sq["upper"]) == pytest.approx(0.0, abs=1e-7)
    assert svg.read_text().startswith("<svg")


def test_sweep_tau_includes_point_bounds(config_path, capsys):
    code = main([
        "sweep-tau", "--config", config_path, "--from", "4000", "--to", "4000", "--step", "1000",
    ])
    sweep_rows = json.loads(capsys.readouterr().out)["results"]
    code2 = main(["bounds", "--config", config_path, "--param", "AB", "--tau", "4000"])
    single = json.loads(capsys.readouterr().out)["results"][0]
    assert code == 0 and code2 == 0
    match = [r for r in sweep_rows if r["param"] == "AB"][0]
    assert match["lower"] == pytest.approx(single["lower"], abs=1e-9)
    assert match["upper"] == pytest.approx(single["upper"], abs=1e-9)


def test_sweep_kappa(config_path, capsys):
    code = main([
        "sweep-kappa", "--config", config_path, "--from", "0", "--to", "6000", "--step", "3000",
    ])
    assert code == 0
    rows = json.loads(capsys.readouterr().out)["results"]
    by_kappa = {(r["param"], r["kappa"]): r for r in rows}
    full_removal = by_kappa[("ABk", 6000.0)]
    assert full_removal["lower"] == pytest.approx(0.0, abs=1e-7)
    assert full_removal["upper"] == pytest.approx(0.0, abs=1e-7)


def test_sweep_parallel_matches_serial(config_path, capsys):
    argv = ["sweep-tau", "--config", config_path, "--from", "3000", "--to", "5000", "--step", "1000"]
    main(argv)
    serial = json.loads(capsys.readouterr().out)["results"]
    main(argv + ["--jobs", "2"])
    parallel = json.loads(capsys.readouterr().out)["results"]
    assert serial == parallel


def test_simulate_then_ci_and_spec_test(config_path, tmp_path, capsys):
    students = tmp_path / "students.csv"
    code = main([
        "simulate", "--config", config_path, "--model", "l1", "--n", "900",
        "--seed", "7", "--out", str(students),
    ])
    assert code == 0
    capsys.readouterr()
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert set(truth) >= {"AB", "AC", "AS"}

    code = main([
        "ci", "--config", config_path, "--students", str(students),
        "--schools", str(tmp_path / "schools.csv"), "--param", "AB",
        "--subsamples", "15", "--seed", "3", "--grid-step", "400",
    ])
    assert code == 0
    ci_payload = json.loads(capsys.readouterr().out)
    assert not ci_payload["empty"]
    lo, hi = ci_payload["ci"]
    assert lo <= truth["AB"] <= hi  # point estimate near truth at n=900

    code = main([
        "spec-test", "--config", config_path, "--students", str(students),
        "--schools", str(tmp_path / "schools.csv"), "--subsamples", "15", "--seed", "3",
    ])
    assert code == 0
    spec_payload = json.loads(capsys.readouterr().out)
    assert spec_payload["p_value"] == 1.0


def test_partition_dump(config_path, capsys):
    code = main(["partition", "dump", "--config", config_path, "--tau", "1500"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["elements"]) == 8
    kinds = {("point" in c) for e in payload["elements"] for c in e["coordinates"]}
    assert kinds == {True, False}


def test_manifest_reproducible_with_pinned_epoch(config_path, capsys, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    main(["bounds", "--config", config_path, "--param", "AB"])
    first = capsys.readouterr().out
    main(["bounds", "--config", config_path, "--param", "AB"])
    second = capsys.readouterr().out
    assert first == second
