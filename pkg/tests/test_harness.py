"""Problem files, report generation, trials, and the command-line interface."""

from __future__ import annotations

import json
import os

import numpy as np
import pytest

from tansurf.cli import main as cli_main
from tansurf.harness import (
    ProblemError,
    directed_genericity_trial,
    genericity_trial,
    load_problem,
    parse_problem,
    report_to_csv,
    run_classify,
    run_mesh,
    run_scan,
    serialize_report,
)

MINIMAL = {
    "dimension": 3,
    "christoffel": {},
    "curve": ["t", "t^2", "t^3"],
    "t0": [0.0],
}


def problem(**overrides):
    data = dict(MINIMAL)
    data.update(overrides)
    return parse_problem(data, "unit")


# --- parsing and validation ---------------------------------------------------

def test_minimal_problem_parses():
    p = problem()
    assert p.dimension == 3
    assert len(p.tasks) == 1
    assert p.tasks[0].t0_list == [0.0]


@pytest.mark.parametrize(
    "mutation, fragment",
    [
        ({"dimension": None}, "dimension"),
        ({"dimension": 1}, "dimension"),
        ({"curve": None}, "exactly one of 'curve' or 'curves'"),
        ({"curves": [{"name": "a", "curve": ["t", "t", "t"]}]}, "'curve' or 'curves'"),
        ({"metric": {"1,1": "1"}}, "'christoffel' or 'metric'"),
        ({"christoffel": None, "metric": None}, "'christoffel' or 'metric'"),
        ({"curve": ["t", "t^2"]}, "2 components for dimension 3"),
        ({"curve": ["t", "t^2", "foo(t)"]}, "unknown identifier"),
    ],
)
def test_validation_errors(mutation, fragment):
    data = dict(MINIMAL)
    for k, v in mutation.items():
        if v is None:
            data.pop(k, None)
        else:
            data[k] = v
    with pytest.raises(ProblemError, match=fragment):
        parse_problem(data, "bad")


def test_load_problem_bundled_names_and_path_errors(tmp_path):
    for name in ("example-12-4", "example-12-4.json"):
        assert load_problem(name).dimension == 3
    with pytest.raises(ProblemError, match="no bundled problem"):
        load_problem("no-such-problem")
    with pytest.raises(ProblemError, match="no such problem file"):
        load_problem(str(tmp_path / "missing.json"))
    bad = tmp_path / "broken.json"
    bad.write_text("{ not json")
    with pytest.raises(ProblemError, match="invalid JSON"):
        load_problem(str(bad))


def test_per_curve_dimension_override():
    p = load_problem("flat-normal-forms")
    dims = {t.name: t.dimension for t in p.tasks}
    assert dims["open-swallowtail"] == 4
    assert dims["cuspidal-edge"] == 3


# --- classify / scan reports ---------------------------------------------------

def test_run_classify_bundled_expectations():
    """Each bundled problem carries its expected kinds in the task metadata;
    the classifier must reproduce them."""
    for name in ("example-12-4", "flat-normal-forms", "sphere-latitude"):
        p = load_problem(name)
        rep, code = run_classify(p, run_diagnostics=False)
        assert code == 0, rep
        expected = {t.name: t.expect for t in p.tasks}
        for rec in rep["records"]:
            want = expected[rec["curve"]]
            if want:
                assert rec["kind"] == want, (name, rec)
                # the record echoes the expectation for downstream consumers
                assert rec["expect"] == want and rec["matched"] is True
            else:
                assert "matched" not in rec


def test_run_classify_guard_band_exit_2():
    p = problem(curve=["t", "t^2", "0.000000008 * t^3"])
    rep, code = run_classify(p, run_diagnostics=False)
    assert code == 2
    assert rep["records"][0]["kind"] == "unresolved"
    assert "guard band" in rep["records"][0]["reason"]


def test_report_is_byte_deterministic():
    p = load_problem("flat-normal-forms")
    a = serialize_report(run_classify(p, run_diagnostics=False)[0])
    b = serialize_report(run_classify(p, run_diagnostics=False)[0])
    assert a == b
    assert a.endswith("\n")
    json.loads(a)  # valid JSON document


def test_serialize_report_rejects_nan():
    with pytest.raises(ValueError):
        serialize_report({"x": float("nan")})


def test_run_scan_event_report():
    p = problem(curve=["t", "t^2", "t^4 - t^3"], scan={"n": 80, "from": -1, "to": 1})
    rep, code = run_scan(p)
    assert code == 0
    events = [r for r in rep["records"] if r.get("event")]
    assert len(events) == 1
    assert events[0]["t0"] == pytest.approx(0.25, abs=1e-6)
    assert events[0]["kind"] == "folded-umbrella"


def test_report_to_csv_records_and_trials():
    p = load_problem("flat-normal-forms")
    rep, _ = run_classify(p, run_diagnostics=False)
    csv_text = report_to_csv(rep)
    lines = csv_text.strip().splitlines()
    assert lines[0].startswith("curve,t0,kind")
    assert len(lines) == 1 + len(rep["records"])
    trial = genericity_trial(3, n_curves=5, n_points=2)
    csv_trial = report_to_csv(trial)
    assert csv_trial.splitlines()[0] == "type,count"
    assert '"1,2,3",10' in csv_trial


# --- mesh report ----------------------------------------------------------------

def test_run_mesh_writes_files_and_reference_deviation(tmp_path):
    p = load_problem("example-12-4")
    lines = []
    rep, code = run_mesh(p, out_dir=str(tmp_path), echo=lines.append)
    assert code == 0
    entry = rep["meshes"][0]
    assert entry["holes"] == 0
    assert entry["max_reference_deviation"] < 1e-6
    bands = entry["sigma_sign_bands"]
    assert any(b["s_lo"] <= 0.0 <= b["s_hi"] or abs(b["s_lo"]) < 0.05 for b in bands)
    for fname in entry["files"]:
        full = tmp_path / fname
        assert full.exists() and full.stat().st_size > 0
    assert any("deviation" in l for l in lines)


# --- genericity trials -----------------------------------------------------------

def test_genericity_trial_m3_small():
    rep = genericity_trial(3, n_curves=20, n_points=3, seed=42)
    assert rep["frequencies"] == {"1,2,3": 60}
    assert rep["generic_type"] == "1,2,3"
    assert rep["generic_fraction"] == 1.0
    assert rep["off_generic"] == []
    again = genericity_trial(3, n_curves=20, n_points=3, seed=42)
    assert serialize_report(rep) == serialize_report(again)
    other = genericity_trial(3, n_curves=20, n_points=3, seed=43)
    assert serialize_report(other) != serialize_report(rep)


def test_genericity_trial_m4_and_flat():
    rep = genericity_trial(4, n_curves=10, n_points=3, connection="flat")
    assert rep["frequencies"] == {"1,2,3,4": 30}


def test_genericity_trial_degree_too_low():
    with pytest.raises(ValueError, match="degree"):
        genericity_trial(3, n_curves=2, n_points=1, degree=3)


def test_directed_trial_predictions():
    """Frame type (a_1, a_2, ...) plus factor order ell gives curve type
    (a_1 + ell, a_2 + ell, ...) — checked sample by sample."""
    rep0 = directed_genericity_trial(3, n=12, ell=0, seed=42)
    assert rep0["frequencies"] == {"1,2,3": 12}
    assert rep0["predictions_verified"] == 12
    rep1 = directed_genericity_trial(3, n=12, ell=1, seed=42)
    assert rep1["frequencies"] == {"2,3,4": 12}
    assert rep1["predictions_verified"] == 12
    assert rep1["off_generic"] == []


# --- command-line interface -------------------------------------------------------

def test_cli_classify_stdout(capsys):
    code = cli_main(["classify", "flat-normal-forms", "--no-diagnostics"])
    out = capsys.readouterr().out
    assert code == 0
    rep = json.loads(out[out.index("{") :])
    assert {r["kind"] for r in rep["records"]} == {
        "cuspidal-edge", "folded-umbrella", "swallowtail", "open-swallowtail",
    }


def test_cli_classify_out_file(tmp_path, capsys):
    code = cli_main(
        ["classify", "example-12-4", "--no-diagnostics", "--out", str(tmp_path)]
    )
    assert code == 0
    files = list(tmp_path.glob("*.json"))
    assert len(files) == 1
    rep = json.loads(files[0].read_text())
    assert all(r["kind"] == "degenerate-psi-zero" for r in rep["records"])


def test_cli_error_exit_codes(tmp_path, capsys):
    assert cli_main(["classify", "definitely-not-bundled"]) == 1
    err = capsys.readouterr().err
    assert "error:" in err
    guard = tmp_path / "guard.json"
    guard.write_text(json.dumps({
        "dimension": 3,
        "christoffel": {},
        "curve": ["t", "0.000000008 * t^2", "t^3"],
        "t0": [0.0],
    }))
    assert cli_main(["classify", str(guard)]) == 2


def test_cli_scan_and_trial_csv(capsys):
    assert cli_main(["scan", "flat-normal-forms", "--format", "csv"]) == 0
    out = capsys.readouterr().out
    assert out.count("swallowtail") >= 1
    assert cli_main(["trial", "--m", "3", "--curves", "5", "--points", "2",
                     "--format", "csv"]) == 0
    out = capsys.readouterr().out
    assert '"1,2,3",10' in out


def test_cli_mesh_writes_outputs(tmp_path, capsys):
    assert cli_main(["mesh", "example-12-4", "--out", str(tmp_path)]) == 0
    names = {f.name for f in tmp_path.iterdir()}
    assert {"example-12-4.obj", "example-12-4.csv", "example-12-4-mesh.json"} <= names


def test_cli_directed_trial(capsys):
    assert cli_main(["trial", "--directed", "--ell", "1", "--n", "6"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["frequencies"] == {"2,3,4": 6}
