"""Acceptance suite: one test per release criterion, at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass/fail line
per criterion with its runtime against the budget.
"""

from __future__ import annotations

import hashlib
import json
import random
import shutil
import subprocess
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from agentline.canonical import canonical_json
from agentline.critic import BlindnessViolation, build_critic_input, check_blindness
from agentline.diagnosis import template_report
from agentline.flips import PassVector, compute_flips
from agentline.gate import GateConfig, HistoryEntry, StopConfig, decide, should_stop
from agentline.harness import Blueprint, SubprocessAdapter, run_dataset
from agentline.line import VersionLine
from agentline.pipeline import (
    PipelineConfig,
    resolve_components,
    run_pipeline,
)
from agentline.line import LineError
from agentline.records import (
    CriticVerdict,
    Dataset,
    Example,
    GradeResult,
    Rubric,
    SymptomTaxonomy,
    TestSetHygieneError,
    merge_taxonomy,
    serialize_records,
)
from agentline.scoring import final_pass
from agentline.simulator import build_model, simulate_trajectory
from conftest import GATE_SUMMARY_ROWS, make_trace, random_record, summary_flip_report

REFERENCE_DIST = Path(__file__).resolve().parent.parent / "reference-scripts" / "dist"
NODE = shutil.which("node")
SECONDARY_READY = NODE is not None and (REFERENCE_DIST / "diagBasic.js").exists()


@contextmanager
def criterion(name: str, budget_seconds: float):
    start = time.monotonic()
    yield
    elapsed = time.monotonic() - start
    assert elapsed < budget_seconds, f"{name}: {elapsed:.2f}s exceeded {budget_seconds}s budget"
    print(f"[criterion] {name}: PASS ({elapsed:.2f}s < {budget_seconds:.0f}s)")


# ---------------------------------------------------------------------------
# Gate goldens
# ---------------------------------------------------------------------------


def test_table2_gate_golden():
    """The golden trajectory's gate evidence reproduces its accept/reject column 11/11."""
    with criterion("gate golden rows 11/11", 1.0):
        for row in GATE_SUMMARY_ROWS:
            decision = decide(summary_flip_report(row), ["target"], GateConfig())
            assert decision.accept == row[1], (
                f"iteration {row[0]} expected {'Acc.' if row[1] else 'Rej.'}, "
                f"reasons: {[r.to_dict() for r in decision.reasons]}"
            )


def test_table2_stopping():
    """The same history stops exactly after the final row (small fix yield)."""
    with criterion("stopping fires after final row only", 1.0):
        history = [
            HistoryEntry(
                iteration=row[0],
                flip_report=summary_flip_report(row),
                decision=decide(summary_flip_report(row), ["target"], GateConfig()),
            )
            for row in GATE_SUMMARY_ROWS
        ]
        for upto in range(1, len(history)):
            assert not should_stop(history[:upto], StopConfig()).stop, (
                f"premature stop after row {upto}"
            )
        final = should_stop(history, StopConfig())
        assert final.stop
        assert final.conditions == ("small_fix_yield",)
        assert final.details["small_fix_yield"] == [5, 2]


# ---------------------------------------------------------------------------
# Flip algebra
# ---------------------------------------------------------------------------


def test_flip_algebra_property_suite():
    """Disjointness, containment, conservation, and oracle equality on >=10^4 pairs."""
    with criterion("flip algebra on 10^4 random pairs (n up to 2000)", 30.0):
        rng = random.Random(20_24)
        sizes = [2000] * 200 + [rng.randint(301, 1500) for _ in range(800)]
        sizes += [rng.randint(1, 300) for _ in range(9_000)]
        assert len(sizes) >= 10_000
        violations = 0
        for n in sizes:
            ids = [f"e{i}" for i in range(n)]
            prev = {i: rng.getrandbits(1) == 1 for i in ids}
            cand = {i: rng.getrandbits(1) == 1 for i in ids}
            pv = PassVector(tag="p", passes=prev)
            cv = PassVector(tag="c", passes=cand)
            p2f, f2p = compute_flips(pv, cv)

            # independent elementwise oracle
            o_p2f, o_f2p = set(), set()
            for key in ids:
                if prev[key] and not cand[key]:
                    o_p2f.add(key)
                elif not prev[key] and cand[key]:
                    o_f2p.add(key)
            prev_pass = {k for k, v in prev.items() if v}
            cand_pass_count = sum(cand.values())
            ok = (
                p2f == o_p2f
                and f2p == o_f2p
                and not (p2f & f2p)
                and p2f <= prev_pass
                and f2p <= (set(ids) - prev_pass)
                and cand_pass_count == len(prev_pass) - len(p2f) + len(f2p)
            )
            violations += 0 if ok else 1
        assert violations == 0


# ---------------------------------------------------------------------------
# Pass indicator
# ---------------------------------------------------------------------------


def test_pass_indicator_truth_table():
    """final_pass matches the exhaustive 6-case definition exactly."""
    with criterion("pass indicator truth table (6/6)", 5.0):
        grades = {
            "pass": GradeResult(passed=True),
            "fail": GradeResult(passed=False, error_code="e"),
            "absent": None,
        }
        expected = {
            ("pass", True): True,
            ("pass", False): True,
            ("fail", True): False,
            ("fail", False): False,
            ("absent", True): True,
            ("absent", False): False,
        }
        for (grade_name, critic_pass), want in expected.items():
            verdict = CriticVerdict(
                pass_judgment=critic_pass, symptom_label="" if critic_pass else "s"
            )
            assert final_pass(grades[grade_name], verdict) is want


# ---------------------------------------------------------------------------
# Critic blindness
# ---------------------------------------------------------------------------


def test_blindness_property():
    """Fixed traces hash identically across 100 blueprints; rubric-channel
    injections are detected with zero misses."""
    with criterion("critic blindness (100 blueprints, zero misses)", 30.0):
        rng = random.Random(88)
        rubric = Rubric(id="r", text="Judge groundedness of the final answer.")
        taxonomy = merge_taxonomy(SymptomTaxonomy(), ["tool_error"], 0)
        trace = make_trace("e9", ["tool_call", "final_output"], final_output="out")
        reference = build_critic_input(rubric, trace, None, taxonomy).digest()

        mismatches = 0
        blueprints = []
        for i in range(100):
            files = {
                f"file{j}.md": "".join(rng.choice("abcdefgh \n") for _ in range(rng.randint(24, 100)))
                for j in range(rng.randint(1, 4))
            }
            blueprint = Blueprint(version_id=f"v{i:03d}", files=files)
            blueprints.append(blueprint)
            digest = build_critic_input(rubric, trace, None, taxonomy).digest()
            if digest != reference:
                mismatches += 1
        assert mismatches == 0

        missed = 0
        for blueprint in blueprints[:50]:
            path, content = next(iter(blueprint.files.items()))
            tainted = Rubric(id="r", text=f"Also consider: {content}")
            tainted_input = build_critic_input(tainted, trace, None, taxonomy)
            try:
                check_blindness(tainted_input, blueprint)
                missed += 1
            except BlindnessViolation:
                pass
            path_tainted = Rubric(id="r", text=f"See {path} for the grading notes.")
            try:
                check_blindness(build_critic_input(path_tainted, trace, None, taxonomy), blueprint)
                missed += 1
            except BlindnessViolation:
                pass
        assert missed == 0


# ---------------------------------------------------------------------------
# End-to-end deterministic run
# ---------------------------------------------------------------------------

E2E_TASK = {
    "kind": "simulated",
    "n_train": 50,
    "seed": 7,
    "fail_fraction": 0.6,
    "regression_probability": 0.004,
    "risky_rc_period": 4,
    "risky_regression_probability": 0.3,
}


def _tree_hash(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file() and path.name != ".lock":
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def _train_pass_rate(line: VersionLine, iteration: int, name: str) -> float:
    payload = (line.iteration_dir(iteration) / "records" / name).read_text()
    lines = [l for l in payload.splitlines() if l.strip()]
    passed = sum(1 for l in lines if '"final_pass":true' in l)
    return passed / len(lines)


def test_e2e_deterministic_run(tmp_path):
    """Seeded 50-example synthetic task: stops within 15 iterations, improves
    the train pass rate, verifies the hash chain, reproduces bit-exactly."""
    with criterion("end-to-end deterministic run", 120.0):
        config = PipelineConfig(task=dict(E2E_TASK), seed=7)
        first = run_pipeline(config, max_iterations=15, line_dir=tmp_path / "a")
        assert first.stopped, "run must terminate via a stopping condition"
        assert first.iterations_run <= 15
        assert first.stop_conditions

        line = first.line
        assert line.verify() == [], "hash chain and artifacts must verify"

        baseline_rate = _train_pass_rate(line, 0, "train.jsonl")
        head_iter = next(
            v["iteration"] for v in line.versions if v["version_id"] == line.head_version_id
        )
        assert head_iter > 0, "at least one promotion expected"
        final_rate = _train_pass_rate(line, head_iter, "rc_train.jsonl")
        assert final_rate > baseline_rate

        second = run_pipeline(config, max_iterations=15, line_dir=tmp_path / "b")
        assert second.stopped
        assert _tree_hash(tmp_path / "a") == _tree_hash(tmp_path / "b"), (
            "same seed must reproduce every artifact hash"
        )


# ---------------------------------------------------------------------------
# Ablation orderings
# ---------------------------------------------------------------------------


def _ablation_arm(seed: int, *, gate_on=True, diagnosis=True, noise=0.0, risky_period=3):
    model = build_model(
        n_examples=200,
        fail_fraction=0.4,
        seed=seed,
        regression_probability=0.004,
        risky_rc_period=risky_period,
        risky_regression_probability=0.18,
        mislabel_rate=noise,
        mistarget_regression_boost=25.0,
        no_diagnosis_fix_penalty=0.5,
    )
    return simulate_trajectory(
        model,
        GateConfig(enabled=gate_on),
        StopConfig(),
        seed,
        12,
        disable_diagnosis=not diagnosis,
    )


def test_table3_ablation_ordering():
    """Orderings only (absolute numbers need real benchmarks and models):
    (a) no gate -> more bad releases and higher promoted regression rate,
    (b) no executable diagnosis -> lower total fix yield,
    (c) critic label noise -> higher evaluated regression rate."""
    with criterion("ablation orderings over 100 seeds", 300.0):
        seeds = range(100)
        a_ok = b_ok = c_ok = 0
        gate_on_bad_total = 0
        for seed in seeds:
            full = _ablation_arm(seed)
            gate_off = _ablation_arm(seed, gate_on=False)
            diagnosis_off = _ablation_arm(seed, diagnosis=False)
            clean = _ablation_arm(seed, risky_period=0)
            noisy = _ablation_arm(seed, noise=0.2, risky_period=0)

            gate_on_bad_total += full.bad_release_count
            if (
                gate_off.bad_release_count > full.bad_release_count
                and gate_off.promoted_p2f_rate() > full.promoted_p2f_rate()
            ):
                a_ok += 1
            if diagnosis_off.promoted_total_f2p() < full.promoted_total_f2p():
                b_ok += 1
            if noisy.evaluated_p2f_rate() > clean.evaluated_p2f_rate():
                c_ok += 1
        print(
            f"  orderings: gate {a_ok}/100, diagnosis {b_ok}/100, noise {c_ok}/100; "
            f"gate-on bad releases total {gate_on_bad_total}"
        )
        assert a_ok >= 95, f"gate ordering held in only {a_ok}/100 seeds"
        assert b_ok >= 90, f"diagnosis ordering held in only {b_ok}/100 seeds"
        assert c_ok >= 90, f"noise ordering held in only {c_ok}/100 seeds"
        assert gate_on_bad_total == 0, "the default gate must not admit bad releases"


# ---------------------------------------------------------------------------
# Test-set hygiene
# ---------------------------------------------------------------------------


def test_test_set_hygiene(tmp_path):
    """Zero test-split reads before the final report, exactly one after,
    and a second final report is refused."""
    with criterion("test-set hygiene (0 reads before, 1 after)", 60.0):
        config = PipelineConfig(
            task={**E2E_TASK, "n_test": 20},
            seed=7,
        )
        components = resolve_components(config)
        dataset = components.dataset

        result = run_pipeline(
            config,
            max_iterations=15,
            line_dir=tmp_path / "line",
            components=components,
        )
        assert result.stopped
        assert dataset.split_reads["test"] == 0, "no test reads during development"
        assert dataset.split_reads["train"] > 0

        with pytest.raises(TestSetHygieneError):
            dataset.examples("test")
        assert dataset.split_reads["test"] == 0

        final = run_pipeline(
            config,
            max_iterations=15,
            line_dir=tmp_path / "line",
            components=components,
            run_final_report=True,
        )
        assert final.final_report is not None
        assert dataset.split_reads["test"] == 1, "final report reads the test split once"

        with pytest.raises(LineError, match="already consumed"):
            final.line.final_report(
                dataset,
                components.adapter,
                components.rubric,
                components.scorer,
                components.critic_generator,
                SymptomTaxonomy(),
            )
        assert dataset.split_reads["test"] == 1


# ---------------------------------------------------------------------------
# Benchmark numbers out of scope; final-report path on latent tables only
# ---------------------------------------------------------------------------


def test_final_report_validated_on_latent_table_only(tmp_path):
    """The final-report path is validated against a simulator latent table
    (71/200 -> 0.355); no benchmark-number claims anywhere."""
    with criterion("final report on 71/200 latent table", 30.0):
        from dataclasses import dataclass

        from agentline.critic import RuleBasedCritic
        from agentline.records import Trace, TraceStep

        @dataclass
        class TableAdapter:
            passing: frozenset
            single_flight: bool = False

            def run(self, blueprint, example, seed):
                if example.id in self.passing:
                    output = "ok"
                    steps = (TraceStep(index=0, kind="final_output", payload="ok"),)
                else:
                    output = ""
                    steps = (TraceStep(index=0, kind="error", payload="tool_error: x"),)
                return output, Trace(example_id=example.id, steps=steps, final_output=output)

        line = VersionLine.init(
            tmp_path / "line",
            Blueprint(version_id="v000", files={"prompt.md": "p"}),
            clock="logical",
        )
        line.log_event("stopped", 0, {"conditions": ["small_fix_yield"]})
        dataset = Dataset(
            [Example(id=f"t{i:03d}", input=i, split="test") for i in range(200)]
        )
        adapter = TableAdapter(passing=frozenset(f"t{i:03d}" for i in range(71)))
        report = line.final_report(
            dataset, adapter, Rubric(id="r", text="t"), None, RuleBasedCritic(), SymptomTaxonomy()
        )
        assert report.n_test == 200
        assert report.n_passed == 71
        assert report.pass_rate == pytest.approx(0.355, abs=1e-12)


# ---------------------------------------------------------------------------
# Secondary component criteria
# ---------------------------------------------------------------------------


@pytest.mark.skipif(not SECONDARY_READY, reason="reference-scripts not built (npm run build)")
def test_secondary_cross_implementation_diag_agreement(tmp_path):
    """The reference diagnosis script and the built-in template agree
    field-for-field on 50 randomized record fixtures."""
    with criterion("cross-implementation diagnosis agreement (50 fixtures)", 30.0):
        rng = random.Random(4242)
        script = REFERENCE_DIST / "diagBasic.js"
        for k in range(50):
            n = rng.randint(8, 40)
            records = [random_record(rng, f"e{i:03d}", iteration=k) for i in range(n)]
            labels = sorted(
                {r.critic.symptom_label for r in records if r.critic.symptom_label}
            )
            taxonomy = merge_taxonomy(SymptomTaxonomy(), labels, 0)
            records_path = tmp_path / f"records_{k}.jsonl"
            records_path.write_bytes(serialize_records(records))
            taxonomy_path = tmp_path / f"taxonomy_{k}.json"
            taxonomy_path.write_text(canonical_json(taxonomy.to_dict()))
            out_path = tmp_path / f"out_{k}.json"

            proc = subprocess.run(
                [NODE, str(script), str(records_path), str(taxonomy_path), str(out_path)],
                capture_output=True,
                text=True,
                timeout=30,
            )
            assert proc.returncode == 0, proc.stderr
            theirs = json.loads(out_path.read_text())
            ours = template_report(records, taxonomy).to_dict()
            assert theirs == ours, f"fixture {k} diverged"


@pytest.mark.skipif(not SECONDARY_READY, reason="reference-scripts not built (npm run build)")
def test_secondary_subprocess_contract_conformance(tmp_path):
    """The mock agent round-trips through the harness with byte-identical
    traces on a 20-example behavior table."""
    with criterion("mock agent subprocess conformance (20 examples)", 10.0):
        table = {}
        for i in range(20):
            ex_id = f"e{i:03d}"
            answer = f"answer-{i}"
            table[ex_id] = {
                "output": answer,
                "trace": {
                    "example_id": ex_id,
                    "steps": [
                        {"index": 0, "kind": "tool_call", "payload": '{"q": "x"}', "tool_name": "search"},
                        {"index": 1, "kind": "final_output", "payload": answer},
                    ],
                    "final_output": answer,
                },
            }
        blueprint = Blueprint(
            version_id="v000",
            files={"behavior.json": json.dumps(table), "prompt.md": "scripted"},
        )
        dataset = Dataset([Example(id=f"e{i:03d}", input=i) for i in range(20)])
        adapter = SubprocessAdapter(
            command=(NODE, str(REFERENCE_DIST / "mockAgent.js")), timeout=30
        )
        run_set = run_dataset(adapter, blueprint, dataset, "train")
        assert len(run_set) == 20
        for ex_id, scripted in table.items():
            result = run_set.results[ex_id]
            assert result.output == scripted["output"]
            assert canonical_json(result.trace.to_dict()) == canonical_json(scripted["trace"])
