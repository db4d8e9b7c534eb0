import json
import subprocess
import sys

import numpy as np
import pytest

from cfisac.cli import main
from cfisac.exceptions import InvalidConfigError
from cfisac.harness import (CSV_HEADER, SweepSpec, TrialRecord, emit_results, load_records,
                            recompute_objective, run_sweep, run_trial)
from cfisac.scenario import generate_scenario

from conftest import desk_config

SMALL = desk_config(J=3, M=2, K=2, L=1)


def without_timing(record):
    doc = record.to_dict()
    doc.pop("wall_ms")
    return doc


def test_trial_deterministic():
    a = run_trial(SMALL, "random", 4)
    b = run_trial(SMALL, "random", 4)
    assert a.status == "ok"
    assert without_timing(a) == without_timing(b)


def test_unreachable_targets_recorded_as_infeasible():
    cfg = SMALL.replace(gamma=(1e6,), p_max=1e-9)
    rec = run_trial(cfg, "cc", 0)
    assert rec.status == "infeasible"
    assert rec.objective is None and rec.objective_db is None


@pytest.mark.parametrize("method", ["cc", "joint"])
def test_recompute_matches_stored_objective(method):
    rec = run_trial(SMALL, method, 2)
    assert recompute_objective(rec) == pytest.approx(rec.objective, rel=1e-9)


def test_unknown_method():
    with pytest.raises(ValueError):
        run_trial(SMALL, "greedy", 0)


def test_single_point_sweep():
    spec = SweepSpec(base=SMALL, sweep_axis="num_bs", values=[3], methods=["random"], trials=1)
    records, table = run_sweep(spec)
    assert len(records) == 1
    assert table[0]["trials"] == 1 and table[0]["ok"] == int(records[0].status == "ok")


def test_sweep_pairs_seeds_across_methods():
    spec = SweepSpec(base=SMALL, sweep_axis="gamma_db", values=[4.0, 8.0],
                     methods=["cc", "random"], trials=2, seed0=10)
    records, table = run_sweep(spec)
    assert len(records) == 2 * 2 * 2
    for value in (4.0, 8.0):
        seeds = {m: sorted(r.seed for r in records if r.method == m and r.value == value)
                 for m in ("cc", "random")}
        assert seeds["cc"] == seeds["random"] == [10, 11]
    # identical networks for a given seed regardless of method
    cfg = spec.config_at(8.0)
    assert generate_scenario(cfg, 10).equals(generate_scenario(cfg, 10))
    assert {row["method"] for row in table} == {"cc", "random"}


@pytest.mark.parametrize("doc", [
    {"sweep_axis": "num_targets", "values": [1], "methods": ["cc"]},
    {"sweep_axis": "num_bs", "values": [], "methods": ["cc"]},
    {"sweep_axis": "num_bs", "values": [4], "methods": ["magic"]},
    {"sweep_axis": "num_bs", "values": [12], "methods": ["exhaustive"]},
    {"sweep_axis": "num_bs", "values": [4], "methods": ["cc"], "trials": 0},
])
def test_bad_sweep_specs(doc):
    with pytest.raises(InvalidConfigError):
        SweepSpec.from_dict({"base": {"K": 2}, **doc})


def test_empty_results_are_header_only(tmp_path):
    emit_results([], tmp_path, "csv")
    assert (tmp_path / "results.csv").read_text() == ",".join(CSV_HEADER) + "\n"


def test_csv_rows_and_json_round_trip(tmp_path):
    records = [run_trial(SMALL, "random", s, "num_bs", 3) for s in range(3)]
    emit_results(records, tmp_path, "both")
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert len(lines) == 4 and lines[0].split(",") == CSV_HEADER
    loaded = load_records(tmp_path / "results.json")
    assert [r.to_dict() for r in loaded] == json.loads(json.dumps([r.to_dict() for r in records]))
    assert recompute_objective(loaded[0]) == pytest.approx(records[0].objective, rel=1e-9)


def test_record_dict_round_trip():
    rec = run_trial(SMALL, "cc", 1)
    assert TrialRecord.from_dict(rec.to_dict()) == rec


# ---------------------------------------------------------------- command line

def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


def test_cli_run(tmp_path, capsys):
    cfg = write_json(tmp_path / "cfg.json", {"J": 3, "M": 2, "K": 2, "L": 1})
    assert main(["run", "--config", str(cfg), "--method", "random", "--seed", "1",
                 "--out", str(tmp_path / "out")]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["status"] == "ok" and summary["seed"] == 1
    assert (tmp_path / "out" / "results.csv").exists()


def test_cli_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--method", "cc"]) == 1
    assert "error" in capsys.readouterr().err


def test_cli_invalid_config(tmp_path):
    cfg = write_json(tmp_path / "cfg.json", {"J": 1})
    assert main(["run", "--config", str(cfg), "--method", "cc"]) == 1


def test_cli_bad_method_exits_nonzero(tmp_path):
    cfg = write_json(tmp_path / "cfg.json", {"J": 3})
    with pytest.raises(SystemExit) as exc:
        main(["run", "--config", str(cfg), "--method", "bogus"])
    assert exc.value.code != 0


def test_cli_sweep_as_module(tmp_path):
    spec = write_json(tmp_path / "spec.json", {
        "base": {"J": 3, "M": 2, "K": 2, "L": 1}, "sweep_axis": "num_users",
        "values": [1, 2], "methods": ["random"], "trials": 2})
    out = tmp_path / "out"
    proc = subprocess.run([sys.executable, "-m", "cfisac", "sweep", "--spec", str(spec),
                           "--out", str(out), "--format", "csv"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert len((out / "results.csv").read_text().splitlines()) == 1 + 4
    assert not (out / "results.json").exists()


def test_cli_timing_flag_fills_wall_clock(tmp_path):
    spec = write_json(tmp_path / "spec.json", {
        "base": {"J": 3, "M": 2, "K": 2, "L": 1}, "sweep_axis": "num_bs",
        "values": [3], "methods": ["random"], "trials": 1})
    assert main(["sweep", "--spec", str(spec), "--out", str(tmp_path), "--format", "csv",
                 "--timing"]) == 0
    row = (tmp_path / "results.csv").read_text().splitlines()[1].split(",")
    assert float(row[CSV_HEADER.index("wall_ms")]) > 0
    assert np.isfinite(float(row[CSV_HEADER.index("objective_db")]))
