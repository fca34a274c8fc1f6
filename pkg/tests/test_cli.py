"""The thin-client CLI against an in-process service."""

from __future__ import annotations

import json

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from agentline.cli import main
from agentline.records import serialize_records
from agentline.service.app import create_app
from conftest import make_record

TASK_CONFIG = {
    "task": {"kind": "simulated", "n_train": 30, "n_test": 10, "seed": 3},
    "seed": 3,
}


@pytest.fixture
def env(tmp_path):
    client = TestClient(create_app(tmp_path / "data"))
    runner = CliRunner()

    def invoke(*args, expect_exit=0):
        result = runner.invoke(main, list(args), obj={"client": client}, catch_exceptions=False)
        assert result.exit_code == expect_exit, result.output
        return result

    return invoke, tmp_path


def _write_config(tmp_path) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(TASK_CONFIG))
    return str(path)


def test_init_iterate_report_flow(env):
    invoke, tmp_path = env
    invoke("init", "demo", "--config", _write_config(tmp_path))
    result = invoke("iterate", "demo", "--n", "10")
    assert '"stopped": true' in result.output
    table = invoke("report", "demo")
    assert "Iter" in table.output
    assert "Acc." in table.output
    rows = invoke("report", "demo", "--format", "json")
    assert json.loads(rows.output)[0]["iteration"] == 0


def test_init_with_blueprint_dir(env):
    invoke, tmp_path = env
    blueprint_dir = tmp_path / "bp"
    (blueprint_dir / "sub").mkdir(parents=True)
    (blueprint_dir / "strategy.json").write_text('{"handled": [], "risk": "base"}')
    (blueprint_dir / "sub" / "notes.md").write_text("hello")
    result = invoke(
        "init", "fromdir", "--config", _write_config(tmp_path),
        "--blueprint-dir", str(blueprint_dir),
    )
    assert '"head": "v000"' in result.output


def test_gate_accept_and_reject_exit_codes(env):
    invoke, tmp_path = env
    prev = [make_record(f"e{i}", i < 5, "tool_error") for i in range(20)]
    better = [make_record(f"e{i}", i < 12, "tool_error") for i in range(20)]
    worse = [make_record(f"e{i}", i < 2, "tool_error") for i in range(20)]
    (tmp_path / "prev.jsonl").write_bytes(serialize_records(prev))
    (tmp_path / "better.jsonl").write_bytes(serialize_records(better))
    (tmp_path / "worse.jsonl").write_bytes(serialize_records(worse))
    (tmp_path / "intent.json").write_text(
        json.dumps({"target_symptoms": ["tool_error"], "rationale": "r"})
    )

    accepted = invoke(
        "gate",
        "--prev", str(tmp_path / "prev.jsonl"),
        "--cand", str(tmp_path / "better.jsonl"),
        "--intent", str(tmp_path / "intent.json"),
    )
    assert '"accept": true' in accepted.output

    invoke(
        "gate",
        "--prev", str(tmp_path / "prev.jsonl"),
        "--cand", str(tmp_path / "worse.jsonl"),
        "--intent", str(tmp_path / "intent.json"),
        expect_exit=2,
    )


def test_gate_malformed_records_exit_config_error(env):
    invoke, tmp_path = env
    (tmp_path / "bad.jsonl").write_text("{broken\n")
    (tmp_path / "ok.jsonl").write_bytes(serialize_records([make_record("e", True)]))
    invoke(
        "gate",
        "--prev", str(tmp_path / "bad.jsonl"),
        "--cand", str(tmp_path / "ok.jsonl"),
        expect_exit=4,
    )


def test_bad_task_config_exit_config_error(env):
    invoke, tmp_path = env
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"task": {"kind": "martian"}}))
    invoke("init", "broken", "--config", str(path), expect_exit=4)


def test_diagnose_and_verify(env):
    invoke, tmp_path = env
    invoke("init", "demo", "--config", _write_config(tmp_path))
    diagnosis = invoke("diagnose", "demo")
    assert "dominant_symptoms" in diagnosis.output
    verified = invoke("verify", "demo")
    assert '"ok": true' in verified.output


def test_final_report_flow(env):
    invoke, tmp_path = env
    invoke("init", "demo", "--config", _write_config(tmp_path))
    invoke("iterate", "demo", "--n", "10")
    report = invoke("final-report", "demo")
    assert '"pass_rate"' in report.output


def test_simulate_and_sweep(env):
    invoke, tmp_path = env
    model = tmp_path / "model.json"
    model.write_text(json.dumps({"n_examples": 40, "seed": 1}))
    single = invoke("simulate", "--model", str(model), "--seed", "1", "--iterations", "6")
    assert "Iter" in single.output
    swept = invoke("simulate", "sweep", "--model", str(model), "--seeds", "3", "--iterations", "5")
    assert '"mean_promotions"' in swept.output


def test_lines_listing(env):
    invoke, tmp_path = env
    empty = invoke("lines")
    assert json.loads(empty.output) == {"lines": []}
