"""Shared fixtures and oracle helpers."""

from __future__ import annotations

import random

import pytest

from agentline.flips import FlipReport
from agentline.records import (
    CriticVerdict,
    GradeResult,
    QualityRecord,
    Trace,
    TraceStep,
)

# Golden fixture: one observed release trajectory's per-iteration gate
# evidence, used to pin the default thresholds and the stopping behavior.
# (iteration, accepted, |F2P|, |P2F|, rho_p2f, hit_rate, ftp, p2p)
GATE_SUMMARY_ROWS = [
    (1, True, 38, 4, 0.006, 0.74, 0.12, 0.98),
    (2, True, 30, 5, 0.007, 0.78, 0.20, 0.979),
    (3, False, 42, 28, 0.040, 0.41, 0.28, 0.93),
    (4, True, 25, 3, 0.004, 0.81, 0.32, 0.978),
    (5, True, 18, 4, 0.005, 0.83, 0.36, 0.977),
    (6, True, 12, 3, 0.004, 0.86, 0.39, 0.977),
    (7, False, 9, 15, 0.021, 0.52, 0.41, 0.955),
    (8, True, 8, 2, 0.003, 0.88, 0.44, 0.976),
    (9, True, 6, 2, 0.003, 0.90, 0.46, 0.975),
    (10, True, 5, 2, 0.003, 0.92, 0.47, 0.974),
    (11, False, 2, 3, 0.004, 0.67, 0.48, 0.97),
]


def summary_flip_report(row: tuple) -> FlipReport:
    """A FlipReport carrying exactly the evidence of one golden-fixture row."""
    iteration, _accepted, f2p, p2f, rho, hit, ftp, p2p = row
    return FlipReport(
        prev_tag=f"v{iteration - 1:03d}",
        cand_tag=f"rc-{iteration:03d}",
        p2f_ids=frozenset(f"p2f-{iteration}-{i}" for i in range(p2f)),
        f2p_ids=frozenset(f"f2p-{iteration}-{i}" for i in range(f2p)),
        rho_p2f=rho,
        rho_f2p=0.0,
        epsilon=1e-9,
        ftp=ftp,
        p2p=p2p,
        hit_rate=hit,
        prev_pass_count=667,
        prev_fail_count=333,
        cand_pass_count=667 - p2f + f2p,
        domain_size=1000,
    )


def make_trace(
    example_id: str,
    kinds: list[str] | None = None,
    final_output: str = "done",
    payloads: list[str] | None = None,
    tools: list[str | None] | None = None,
) -> Trace:
    kinds = kinds if kinds is not None else ["action", "final_output"]
    steps = []
    for i, kind in enumerate(kinds):
        payload = payloads[i] if payloads else (final_output if kind == "final_output" else f"step {i}")
        tool = tools[i] if tools else ("tool" if kind == "tool_call" else None)
        steps.append(TraceStep(index=i, kind=kind, payload=payload, tool_name=tool))
    return Trace(example_id=example_id, steps=tuple(steps), final_output=final_output)


def make_record(
    example_id: str,
    final_pass: bool,
    label: str = "tool_error",
    *,
    grade: GradeResult | None = None,
    with_grade: bool = False,
    iteration: int = 0,
    error_code: str | None = None,
) -> QualityRecord:
    if final_pass:
        trace = make_trace(example_id, ["final_output"], final_output="ok")
        verdict = CriticVerdict(pass_judgment=True, symptom_label="", description="")
        output = "ok"
    else:
        trace = Trace(
            example_id=example_id,
            steps=(TraceStep(index=0, kind="error", payload=f"{label}: boom"),),
            final_output="",
        )
        verdict = CriticVerdict(pass_judgment=False, symptom_label=label, description="failed")
        output = ""
    if with_grade and grade is None:
        grade = (
            GradeResult(passed=True)
            if final_pass
            else GradeResult(passed=False, error_code=error_code or "wrong_answer")
        )
    return QualityRecord(
        example_id=example_id,
        output=output,
        trace=trace,
        grade=grade,
        critic=verdict,
        final_pass=final_pass,
        iteration=iteration,
    )


def random_trace(rng: random.Random, example_id: str, max_steps: int = 50) -> Trace:
    n = rng.randint(0, max_steps - 1)
    kinds = [rng.choice(["action", "tool_call", "observation", "error"]) for _ in range(n)]
    steps = []
    for i, kind in enumerate(kinds):
        steps.append(
            TraceStep(
                index=i,
                kind=kind,
                payload="".join(rng.choice("abcdef {}:\"'\\\n\t0123456789") for _ in range(rng.randint(0, 30))),
                tool_name=f"tool{rng.randint(0, 5)}" if kind == "tool_call" else None,
            )
        )
    final_output = "".join(rng.choice("xyz 123\n") for _ in range(rng.randint(0, 20)))
    if rng.random() < 0.5:
        steps.append(TraceStep(index=n, kind="final_output", payload=final_output))
    return Trace(example_id=example_id, steps=tuple(steps), final_output=final_output)


def random_record(rng: random.Random, example_id: str, iteration: int = 0) -> QualityRecord:
    trace = random_trace(rng, example_id)
    has_grade = rng.random() < 0.6
    passed_grade = rng.random() < 0.5
    grade = None
    if has_grade:
        grade = (
            GradeResult(passed=True, details="fine")
            if passed_grade
            else GradeResult(passed=False, error_code=rng.choice(["wrong_answer", "timeout", "schema_violation"]))
        )
    critic_pass = rng.random() < 0.5
    verdict = CriticVerdict(
        pass_judgment=critic_pass,
        symptom_label="" if critic_pass else rng.choice(["tool_error", "empty_output", "missing_required_step"]),
        description="r",
    )
    final = grade.passed if grade is not None else verdict.pass_judgment
    return QualityRecord(
        example_id=example_id,
        output="".join(rng.choice("abc") for _ in range(rng.randint(0, 10))),
        trace=trace,
        grade=grade,
        critic=verdict,
        final_pass=final,
        iteration=iteration,
    )


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)
