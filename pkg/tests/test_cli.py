"""End-to-end runs of the command line on a tiny configuration."""

import json

import pandas as pd
import pytest

from voltsim import cli

STAGES = ["gen-trace", "preprocess", "train", "simulate", "report"]


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, tiny_config):
    ws = tmp_path_factory.mktemp("ws")
    for stage in STAGES:
        assert cli.main([stage, "--config", str(tiny_config), "--out", str(ws)]) == 0, stage
    return ws


def test_stages_write_artifacts(workspace):
    for sub in ("trace", "records", "train", "report"):
        assert (workspace / sub / "manifest.json").exists(), sub
    for report in (workspace / "sim").glob("*.json"):
        assert json.loads(report.read_text())["schemaVersion"] == 1
    for variant in ("rf", "mlp", "min", "max", "avg", "lastmonth", "bestavg"):
        assert (workspace / "train" / f"annotated_{variant}.csv").exists()
        assert (workspace / "train" / f"annex_{variant}.csv").exists()


def test_crystal_wastes_nothing(workspace, tiny_config, capsys):
    code, out, _ = run(capsys, "simulate", "--config", tiny_config, "--out", workspace,
                       "--scheduler", "crystal")
    assert code == 0
    assert json.loads(out)["crystal"]["wastedMWh"] == 0
    doc = json.loads((workspace / "sim" / "crystal.json").read_text())
    assert doc["wastedMWh"] == 0 and doc["tasksCompleted"] > 0


def test_reports_hold_every_scheduler(workspace):
    table = pd.read_csv(workspace / "report" / "comparison.csv")
    assert {"random", "crystal", "ml:rf", "ml:mlp", "ml:bestavg"} <= set(table["scheduler"])


def test_sweep_rows_per_computer_month(tmp_path, tiny_config, capsys):
    for stage in ("gen-trace", "preprocess"):
        assert run(capsys, stage, "--config", tiny_config, "--out", tmp_path)[0] == 0
    code, out, _ = run(capsys, "sweep", "--config", tiny_config, "--out", tmp_path,
                       "--delta", "5,10,20", "--scheduler", "random,ml:rf")
    assert code == 0 and json.loads(out)["rows"] == 6
    acc = pd.read_csv(tmp_path / "sweep" / "accuracy.csv")
    per_cell = acc[acc.model == "rf"].groupby(["computer", "month"]).size()
    assert (per_cell == 3).all()


def test_run_twice_is_byte_identical(tmp_path, tiny_config):
    a, b = tmp_path / "a", tmp_path / "b"
    for ws in (a, b):
        assert cli.main(["run", "--config", str(tiny_config), "--out", str(ws)]) == 0
    names = sorted(p.name for p in (a / "sim").glob("*.json"))
    assert names
    for name in names:
        assert (a / "sim" / name).read_bytes() == (b / "sim" / name).read_bytes()


def test_seed_flag_changes_trace(tmp_path, tiny_config, capsys):
    run(capsys, "gen-trace", "--config", tiny_config, "--out", tmp_path / "a", "--seed", "1")
    run(capsys, "gen-trace", "--config", tiny_config, "--out", tmp_path / "b", "--seed", "2")
    assert (tmp_path / "a/trace/tasks.csv").read_bytes() != (tmp_path / "b/trace/tasks.csv").read_bytes()


class TestErrors:
    def error(self, err):
        doc = json.loads(err.strip().splitlines()[-1])
        assert set(doc) == {"error", "type"}
        return doc

    def test_missing_trace(self, tmp_path, capsys):
        code, _, err = run(capsys, "preprocess", "--out", tmp_path)
        assert code == cli.EXIT_INPUT
        assert self.error(err)["type"] == "MissingInput"

    def test_bad_config(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text('{"bogus": 1}')
        code, _, err = run(capsys, "gen-trace", "--config", tmp_path / "c.json", "--out", tmp_path)
        assert code == cli.EXIT_CONFIG
        assert "bogus" in self.error(err)["error"]

    def test_unknown_scheduler(self, tmp_path, capsys):
        code, _, err = run(capsys, "simulate", "--out", tmp_path, "--scheduler", "ml:median")
        assert code == cli.EXIT_USAGE
        self.error(err)

    def test_schema_mismatch(self, tmp_path, tiny_config, capsys):
        run(capsys, "gen-trace", "--config", tiny_config, "--out", tmp_path)
        manifest = tmp_path / "trace" / "manifest.json"
        meta = json.loads(manifest.read_text())
        meta["schemaVersion"] = 99
        manifest.write_text(json.dumps(meta))
        code, _, err = run(capsys, "preprocess", "--config", tiny_config, "--out", tmp_path)
        assert code == cli.EXIT_INPUT
        assert self.error(err)["type"] == "SchemaError"

    def test_bad_thread_env(self, tmp_path, tiny_config, capsys, monkeypatch):
        monkeypatch.setenv("VOLT_SIM_THREADS", "many")
        run(capsys, "gen-trace", "--config", tiny_config, "--out", tmp_path)
        run(capsys, "preprocess", "--config", tiny_config, "--out", tmp_path)
        code, _, err = run(capsys, "train", "--config", tiny_config, "--out", tmp_path)
        assert code == cli.EXIT_CONFIG
        assert "VOLT_SIM_THREADS" in self.error(err)["error"]
