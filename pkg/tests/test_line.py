"""Version line: promotion, audit chain, tamper detection, final report."""

from __future__ import annotations

import json
from dataclasses import dataclass

import pytest

from agentline.canonical import canonical_json
from agentline.critic import RuleBasedCritic
from agentline.flips import FlipReport
from agentline.gate import GateConfig, GateDecision, decide
from agentline.harness import Blueprint
from agentline.line import FinalReport, LineError, VersionLine
from agentline.rc import BlueprintDiff, ChangeIntent, FileOp, ReleaseCandidate, apply_diff, file_hash
from agentline.records import Dataset, Example, Rubric, SymptomTaxonomy, Trace, TraceStep
from conftest import GATE_SUMMARY_ROWS, summary_flip_report

BP0 = Blueprint(version_id="v000", files={"prompt.md": "first"})


def _decision(accept: bool) -> GateDecision:
    row = GATE_SUMMARY_ROWS[0] if accept else GATE_SUMMARY_ROWS[2]
    return decide(summary_flip_report(row), ["target"], GateConfig())


def _candidate(line: VersionLine, iteration: int) -> tuple[ReleaseCandidate, Blueprint]:
    head = line.head_blueprint()
    content = head.files["prompt.md"] + f"\nrefined at {iteration}"
    diff = BlueprintDiff(
        base_version=head.version_id,
        operations=(
            FileOp(
                op="modify",
                path="prompt.md",
                old_hash=file_hash(head.files["prompt.md"]),
                content=content,
            ),
        ),
    )
    rc_id = f"rc-{iteration:03d}"
    rc = ReleaseCandidate(
        rc_id=rc_id,
        base_version=head.version_id,
        diff=diff,
        intent=ChangeIntent(target_symptoms=("tool_error",)),
        diagnosis_hash="0" * 64,
    )
    return rc, apply_diff(head, diff, rc_id=rc_id)


class TestPromotion:
    def test_accept_advances_head_with_parent_chain(self, tmp_path):
        line = VersionLine.init(tmp_path / "line", BP0, clock="logical")
        rc, blueprint = _candidate(line, 1)
        # store the rc as the pipeline would, then promote
        line.write_iteration_file(1, "rc/rc.json", canonical_json(rc.to_dict()))
        assert line.promote(rc, _decision(True), blueprint, iteration=1) is True
        assert line.head_version_id == "v001"
        versions = line.versions
        assert versions[-1]["parent"] == "v000"
        assert line.events()[-1] == "promoted"

    def test_reject_keeps_head_and_archives_rc(self, tmp_path):
        line = VersionLine.init(tmp_path / "line", BP0, clock="logical")
        rc, blueprint = _candidate(line, 1)
        line.write_iteration_file(1, "rc/rc.json", canonical_json(rc.to_dict()))
        assert line.promote(rc, _decision(False), blueprint, iteration=1) is False
        assert line.head_version_id == "v000"
        assert line.events()[-1] == "discarded"
        # the discarded candidate stays retrievable forever
        assert line.find_rc("rc-001") == rc

    def test_stale_base_is_a_hard_error(self, tmp_path):
        line = VersionLine.init(tmp_path / "line", BP0, clock="logical")
        rc1, bp1 = _candidate(line, 1)
        line.promote(rc1, _decision(True), bp1, iteration=1)
        # rc based on the old head must be refused: single line, no forks
        stale_rc, stale_bp = rc1, bp1
        with pytest.raises(LineError, match="head"):
            line.promote(stale_rc, _decision(True), stale_bp, iteration=2)

    def test_full_trajectory_replay_eight_promotions_three_discards(self, tmp_path):
        line = VersionLine.init(tmp_path / "line", BP0, clock="logical")
        for row in GATE_SUMMARY_ROWS:
            iteration = row[0]
            rc, blueprint = _candidate(line, iteration)
            line.write_iteration_file(iteration, "rc/rc.json", canonical_json(rc.to_dict()))
            decision = decide(summary_flip_report(row), ["target"], GateConfig())
            line.promote(rc, decision, blueprint, iteration=iteration)
        events = line.events()
        assert events.count("promoted") == 8
        assert events.count("discarded") == 3
        assert line.head_version_id == "v010"  # last accepted row
        assert line.verify() == []


class TestAuditChain:
    def _populated(self, tmp_path) -> VersionLine:
        line = VersionLine.init(tmp_path / "line", BP0, clock="logical")
        rc, blueprint = _candidate(line, 1)
        digest = line.write_iteration_file(1, "rc/rc.json", canonical_json(rc.to_dict()))
        line.write_manifest(1, {"rc": {"hash": digest, "path": "rc/rc.json"}})
        line.promote(rc, _decision(True), blueprint, iteration=1)
        return line

    def test_clean_line_verifies(self, tmp_path):
        assert self._populated(tmp_path).verify() == []

    def test_tampered_artifact_breaks_verification(self, tmp_path):
        line = self._populated(tmp_path)
        target = line.iteration_dir(1) / "rc" / "rc.json"
        target.write_text(target.read_text() + " ")
        problems = line.verify()
        assert any("does not match its manifest hash" in p for p in problems)

    def test_tampered_object_store_detected(self, tmp_path):
        line = self._populated(tmp_path)
        obj = next((line.root / "objects").iterdir())
        obj.write_bytes(obj.read_bytes() + b"x")
        assert any("does not match its name" in p for p in line.verify())

    def test_tampered_log_detected(self, tmp_path):
        line = self._populated(tmp_path)
        state = json.loads((line.root / "line.json").read_text())
        state["log"][1]["details"]["examples"] = 999999
        (line.root / "line.json").write_text(canonical_json(state))
        problems = VersionLine.open(line.root).verify()
        assert any("hash mismatch" in p for p in problems)

    def test_dropped_interior_log_entry_breaks_chain(self, tmp_path):
        line = self._populated(tmp_path)
        line.log_event("stopped", 1, {"conditions": ["small_fix_yield"]})
        state = json.loads((line.root / "line.json").read_text())
        assert len(state["log"]) >= 3
        del state["log"][1]
        (line.root / "line.json").write_text(canonical_json(state))
        problems = VersionLine.open(line.root).verify()
        assert problems  # sequence and chain both complain


@dataclass
class _TableAdapter:
    """Latent pass table: listed examples emit the expected output."""

    passing: set
    single_flight: bool = False

    def run(self, blueprint, example, seed):
        if example.id in self.passing:
            output = "ok"
            steps = (TraceStep(index=0, kind="final_output", payload="ok"),)
        else:
            output = ""
            steps = (TraceStep(index=0, kind="error", payload="tool_error: failed"),)
        return output, Trace(example_id=example.id, steps=steps, final_output=output)


class TestFinalReport:
    def _line_with_stop(self, tmp_path) -> VersionLine:
        line = VersionLine.init(tmp_path / "line", BP0, clock="logical")
        line.log_event("stopped", 0, {"conditions": ["small_fix_yield"]})
        return line

    def _dataset(self, n_pass: int, n_total: int) -> tuple[Dataset, _TableAdapter]:
        examples = [Example(id=f"t{i:03d}", input=i, split="test") for i in range(n_total)]
        adapter = _TableAdapter(passing={f"t{i:03d}" for i in range(n_pass)})
        return Dataset(examples), adapter

    def test_refused_before_stop(self, tmp_path):
        line = VersionLine.init(tmp_path / "line", BP0, clock="logical")
        dataset, adapter = self._dataset(1, 2)
        with pytest.raises(LineError, match="after the line has stopped"):
            line.final_report(
                dataset, adapter, Rubric(id="r", text="t"), None, RuleBasedCritic(), SymptomTaxonomy()
            )

    def test_simulator_latent_table_pass_rate(self, tmp_path):
        # 71 of 200 test examples pass by the latent table -> rate 0.355.
        line = self._line_with_stop(tmp_path)
        dataset, adapter = self._dataset(71, 200)
        report = line.final_report(
            dataset, adapter, Rubric(id="r", text="t"), None, RuleBasedCritic(), SymptomTaxonomy()
        )
        assert report.n_test == 200
        assert report.n_passed == 71
        assert report.pass_rate == pytest.approx(0.355)
        assert line.has_event("final_reported")
        stored = FinalReport.from_dict(
            json.loads((line.root / "final_report" / "report.json").read_text())
        )
        assert stored == report

    def test_second_call_refused(self, tmp_path):
        line = self._line_with_stop(tmp_path)
        dataset, adapter = self._dataset(1, 2)
        line.final_report(
            dataset, adapter, Rubric(id="r", text="t"), None, RuleBasedCritic(), SymptomTaxonomy()
        )
        with pytest.raises(LineError, match="already consumed"):
            line.final_report(
                dataset, adapter, Rubric(id="r", text="t"), None, RuleBasedCritic(), SymptomTaxonomy()
            )


def test_init_refuses_existing_line(tmp_path):
    VersionLine.init(tmp_path / "line", BP0, clock="logical")
    with pytest.raises(LineError, match="already exists"):
        VersionLine.init(tmp_path / "line", BP0, clock="logical")


def test_logical_clock_is_deterministic(tmp_path):
    a = VersionLine.init(tmp_path / "a", BP0, clock="logical")
    b = VersionLine.init(tmp_path / "b", BP0, clock="logical")
    assert [e["ts"] for e in a.log] == [e["ts"] for e in b.log]
