import csv
import json
import os
import subprocess
import sys
from dataclasses import fields
from pathlib import Path

import pytest

from hamlearn.cli import build_parser, main
from hamlearn.hamiltonian import serialize_plan, tfim_chain
from hamlearn.pipeline import ExperimentConfig, bundled, emit_tables

ARTIFACTS = ("report.json", "model.json", "dataset.bin", "per_local.csv", "error_vs_n.csv", "noise_sweep.csv")


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def small_plan(tmp_path):
    path = tmp_path / "plan.json"
    path.write_text(serialize_plan(tfim_chain(2, 0.05)))
    return str(path)


def test_identity_full_run(tmp_path):
    out = tmp_path / "out"
    assert main(["full", "--config", str(bundled("identity_n2_config.json")), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    rec = rep["reconstruction"]
    assert rec["surrogate_diamond"] <= 0.3
    assert rec["surrogate_diamond"] <= 2 * sum(rec["per_local_inf_norms"]) + rec["truncation_bound"]
    assert rec["max_trace_distance"] <= rec["surrogate_diamond"] * (1 + rec["surrogate_diamond"] / 2)
    for name in ARTIFACTS:
        assert (out / name).exists()
    assert len(rows(out / "per_local.csv")) == 1 + 6
    assert "error" not in rep


def test_tfim_full_run_is_byte_identical(tmp_path):
    cfg = str(bundled("tfim_n3_config.json"))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["full", "--config", cfg, "--out", str(a)]) == 0
    assert main(["full", "--config", cfg, "--out", str(b), "--threads", "1"]) == 0
    for name in ARTIFACTS:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    rep = json.loads((a / "report.json").read_text())
    assert rep["config"]["seed"] == 42 and rep["dataset"]["N"] == 200000
    assert max(rep["reconstruction"]["per_local_inf_norms"]) <= 0.15
    table = rows(a / "error_vs_n.csv")
    assert table[0] == ["N", "mean_stderr", "max_local_error", "stderr_ratio"]
    assert [int(r[0]) for r in table[1:]] == [12500, 50000, 200000]
    for r in table[2:]:
        assert 0.4 <= float(r[3]) <= 0.6
    assert set(json.loads((a / "timings.json").read_text())) >= {"parse", "simulate", "learn"}


def test_learn_missing_dataset(tmp_path, small_plan, capsys):
    missing = tmp_path / "nowhere.bin"
    code = main(["learn", "--plan", small_plan, "--dataset", str(missing), "--out", str(tmp_path / "o")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["error"]["stage"] == "learn"


def test_missing_plan_and_config(tmp_path, capsys):
    assert main(["simulate", "--plan", str(tmp_path / "x.json"), "--out", str(tmp_path)]) == 2
    assert "x.json" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "c.json")]) == 2
    assert main(["simulate", "--out", str(tmp_path)]) == 2


def test_unknown_mode():
    with pytest.raises(SystemExit) as exc:
        main(["serve"])
    assert exc.value.code == 2


def test_stage_error_keeps_partial_artifacts(tmp_path, capsys):
    plan = tmp_path / "big.json"
    plan.write_text(serialize_plan(tfim_chain(7, 0.05)))
    out = tmp_path / "o"
    assert main(["bench-noise", "--plan", str(plan), "--out", str(out)]) == 1
    assert "bench-noise" in capsys.readouterr().err
    rep = json.loads((out / "report.json").read_text())
    assert rep["error"]["stage"] == "bench-noise" and "truncation" in rep


def test_split_modes(tmp_path, small_plan):
    out = str(tmp_path / "o")
    base = ["--plan", small_plan, "--seed", "3", "--shots", "5000", "--out", out]
    assert main(["simulate", *base]) == 0
    assert main(["learn", *base]) == 0
    assert main(["evaluate", *base]) == 0
    assert main(["verify", *base]) == 0
    rep = json.loads(Path(out, "report.json").read_text())
    assert len(rep["verify"]["pairs"]) == 10
    assert main(["classify", *base]) == 0
    rep = json.loads(Path(out, "report.json").read_text())
    assert rep["classify"]["mean_loss"] <= rep["truncation"]["bound"] + 1e-6


def test_bench_noise_sweep(tmp_path, small_plan):
    out = tmp_path / "o"
    assert main(["bench-noise", "--plan", small_plan, "--shots", "5000", "--trunc-m", "1", "--out", str(out)]) == 0
    table = rows(out / "noise_sweep.csv")
    assert table[0] == ["gamma", "max_gap", "reference"]
    assert [float(r[0]) for r in table[1:]] == [0.01, 0.02, 0.04]
    assert rows(out / "per_local.csv") == [["qubit", "observable", "inf_norm_error"]]


def test_emit_tables_header_only(tmp_path):
    paths = emit_tables({}, tmp_path)
    assert [p.name for p in paths] == ["per_local.csv", "error_vs_n.csv", "noise_sweep.csv"]
    for p in paths:
        assert len(rows(p)) == 1


def test_out_env_override(tmp_path, small_plan, monkeypatch):
    monkeypatch.setenv("HAMLEARN_OUT", str(tmp_path / "env"))
    assert main(["simulate", "--plan", small_plan, "--shots", "100", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env" / "dataset.bin").exists()
    assert not (tmp_path / "flag").exists()


def test_every_flag_maps_to_one_field():
    names = {f.name for f in fields(ExperimentConfig)}
    dests = {a.dest for a in build_parser()._actions if a.dest not in ("help", "config", "verbose")}
    assert dests <= names
    assert names - dests == set()


def test_console_script(tmp_path, small_plan):
    env = dict(os.environ)
    env.pop("HAMLEARN_OUT", None)
    proc = subprocess.run([sys.executable, "-m", "hamlearn.cli", "simulate", "--plan", small_plan,
                           "--shots", "50", "--out", str(tmp_path / "o")],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "o" / "dataset.bin").stat().st_size > 0
