import json
import subprocess
import sys

import pytest

from rmtlab.cli import main
from rmtlab.config import CSV_COLUMNS, ExperimentConfig, ResultRecord
from rmtlab.report import read_record
from rmtlab.runner import record_to_json, write_record

TAIL_ARGS = ["estimate-tail", "--n", "6", "--k", "2", "--t-grid", "1,2,4", "--trials", "3000", "--seed", "5"]


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.mark.parametrize("command", [
    TAIL_ARGS,
    ["estimate-smallball", "--n", "6", "--k", "1", "--t-grid", "0.25,0.5,1", "--trials", "3000", "--seed", "5"],
    ["verify-moments", "--taus", "1,2", "--k", "2", "--m", "2", "--trials", "2000", "--seed", "3"],
])
def test_outputs_independent_of_workers(tmp_path, monkeypatch, command):
    blobs = []
    for workers in ("1", "3"):
        monkeypatch.setenv("RMT_WORKERS", workers)
        base = tmp_path / f"w{workers}"
        assert run_cli(*command, "--out", base) == 0
        blobs.append(((base.parent / (base.name + ".json")).read_bytes(),
                      (base.parent / (base.name + ".csv")).read_bytes()))
    assert blobs[0] == blobs[1]


def test_csv_to_stdout(capsys):
    assert run_cli(*TAIL_ARGS) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    assert len(lines) == 4


def test_invalid_configuration_exit_2(tmp_path, monkeypatch):
    assert run_cli("estimate-tail", "--n", "0", "--k", "1") == 2
    assert run_cli("estimate-tail", "--n", "4", "--k", "1", "--dist", "cauchy") == 2
    assert run_cli("estimate-smallball", "--n", "4", "--k", "1", "--t-grid", "0.5,2") == 2
    with pytest.raises(SystemExit) as exc:
        run_cli("estimate-tail", "--bogus")
    assert exc.value.code == 2
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "tail", "n": 4, "k": 1, "colour": "red"}))
    assert run_cli("run", cfg) == 2
    monkeypatch.setenv("RMT_WORKERS", "zero")
    assert run_cli(*TAIL_ARGS) == 2


def test_capacity_exit_3():
    assert run_cli("density-check", "--n", "4", "--trials", "100") == 3


def test_existing_output_exit_4(tmp_path):
    base = tmp_path / "res"
    assert run_cli(*TAIL_ARGS, "--out", base) == 0
    assert run_cli(*TAIL_ARGS, "--out", base) == 4
    assert run_cli(*TAIL_ARGS, "--out", base, "--overwrite") == 0


def test_malformed_record_exit_5(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_cli("plot", bad, "--format", "csv") == 5
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"experiment": "tail", "rows": []}))
    out = tmp_path / "empty.svg"
    assert run_cli("plot", empty, "--format", "svg", "--out", out) == 5
    assert not out.exists()
    assert run_cli("plot", tmp_path / "missing.json") == 5


def test_unknown_format_exit_2(tmp_path):
    base = tmp_path / "res"
    assert run_cli(*TAIL_ARGS, "--out", base) == 0
    assert run_cli("plot", tmp_path / "res.json", "--format", "png") == 2


def test_json_csv_json_roundtrip(tmp_path):
    base = tmp_path / "res"
    assert run_cli(*TAIL_ARGS, "--out", base) == 0
    original = read_record(tmp_path / "res.json")
    assert run_cli("plot", tmp_path / "res.json", "--format", "csv", "--out", tmp_path / "copy.csv") == 0
    assert run_cli("plot", tmp_path / "copy.csv", "--format", "json", "--out", tmp_path / "copy.json") == 0
    again = read_record(tmp_path / "copy.json")
    assert again.rows == original.rows
    assert (tmp_path / "copy.csv").read_text() == (tmp_path / "res.csv").read_text()


def test_svg_reports_slope(tmp_path):
    rows = []
    for t in (0.125, 0.25, 0.5, 1.0):
        row = {c: None for c in CSV_COLUMNS}
        row.update(experiment="smallball", n=10, k=1, t=t, p_hat=t / 4, ci_low=t / 4 * 0.99,
                   ci_high=t / 4 * 1.01, trials=100_000, seed=0)
        rows.append(row)
    write_record(ResultRecord("smallball", rows), tmp_path / "syn")
    out = tmp_path / "syn.svg"
    assert run_cli("plot", tmp_path / "syn.json", "--format", "svg", "--out", out) == 0
    text = out.read_text()
    assert text.lstrip().startswith("<?xml") and "<svg" in text
    assert "slope=1.00" in text


def test_run_config_and_fit_slope(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"experiment": "smallball", "n": 8, "k": 1, "t_grid": [0.25, 0.5, 1.0],
                               "trials": 5000, "seed": 2}))
    assert run_cli("run", cfg, "--out", tmp_path / "r") == 0
    rec = json.loads((tmp_path / "r.json").read_text())
    assert rec["fingerprint"] == ExperimentConfig.from_dict(rec["config"]).fingerprint()
    for row in rec["rows"]:
        row["slope"] = None
    (tmp_path / "stripped.json").write_text(json.dumps(rec))
    assert run_cli("fit-slope", tmp_path / "stripped.json", "--out", tmp_path / "fit") == 0
    fitted = read_record(tmp_path / "fit.json")
    assert fitted.rows[0]["slope"] == pytest.approx(rec["summary"]["slope"], rel=1e-12)


def test_moment_symmetrized_odd_is_zero(capsys):
    assert run_cli("verify-moments", "--taus", "1,1,1", "--k", "1", "--m", "1", "--i", "0", "--j", "1",
                   "--trials", "1000", "--symmetrize") == 0
    header, row = capsys.readouterr().out.splitlines()
    values = dict(zip(header.split(","), row.split(",")))
    assert float(values["estimate"]) == 0.0


def test_installed_entry_point():
    proc = subprocess.run([sys.executable, "-m", "rmtlab.cli", "hs-compare", "--n", "4", "--k", "1",
                           "--outer-trials", "2", "--inner-trials", "1000"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("experiment,")


def test_record_json_is_sorted_and_stable(tmp_path):
    base = tmp_path / "res"
    assert run_cli(*TAIL_ARGS, "--out", base) == 0
    rec = read_record(tmp_path / "res.json")
    text = (tmp_path / "res.json").read_text()
    assert record_to_json(rec) == text
