"""Deterministic programmatic scorers and the final pass-indicator rule.

Scorers are pure functions of (output, trace, rubric). A scorer crash maps
to a *failing* grade, never to an absent one: absence is reserved for "no
scorer exists", which keeps the two-case pass indicator well defined.
"""

from __future__ import annotations

import json
import logging
import os
import re
import subprocess
import tempfile
from dataclasses import dataclass
from typing import Mapping, Protocol

from .records import CriticVerdict, GradeResult, Rubric, Trace

logger = logging.getLogger(__name__)


def final_pass(grade: GradeResult | None, verdict: CriticVerdict) -> bool:
    """Hard signal wins when present; otherwise fall back to the critic."""
    if grade is not None:
        return grade.passed
    return verdict.pass_judgment


class Scorer(Protocol):
    """Behavioral contract: (output, trace, rubric) -> GradeResult, pure."""

    def grade(self, output: str, trace: Trace, rubric: Rubric) -> GradeResult: ...


def score(
    scorer: Scorer,
    output: str,
    trace: Trace,
    rubric: Rubric,
    *,
    check_determinism: bool = False,
) -> GradeResult:
    """Run a scorer defensively: crashes become failing grades, not pipeline failures.

    With ``check_determinism`` the scorer is invoked twice and must agree;
    use in debug runs to enforce the purity contract.
    """
    try:
        result = scorer.grade(output, trace, rubric)
    except Exception as exc:  # noqa: BLE001 - scorers must not kill iterations
        logger.error("scorer %s crashed on example %s: %s", scorer, trace.example_id, exc)
        return GradeResult(passed=False, error_code="scorer_error", details=str(exc))
    if check_determinism:
        again = scorer.grade(output, trace, rubric)
        if again != result:
            raise RuntimeError(
                f"scorer {scorer!r} is non-deterministic on example {trace.example_id!r}: "
                f"{result} != {again}"
            )
    return result


@dataclass(frozen=True)
class ExactMatchScorer:
    """Pass iff the output equals the expected answer for the example."""

    answers: Mapping[str, str]

    def grade(self, output: str, trace: Trace, rubric: Rubric) -> GradeResult:
        expected = self.answers.get(trace.example_id)
        if expected is None:
            return GradeResult(passed=False, error_code="no_reference", details="")
        if output == expected:
            return GradeResult(passed=True)
        return GradeResult(
            passed=False,
            error_code="wrong_answer",
            details=f"expected {expected[:80]!r}",
        )


@dataclass(frozen=True)
class SchemaScorer:
    """Structured-output check: JSON with required fields of the right type.

    ``required`` maps field name to a JSON type name (object, array, string,
    number, boolean, null) or to "any".
    """

    required: Mapping[str, str]

    _TYPES = {
        "object": dict,
        "array": list,
        "string": str,
        "number": (int, float),
        "boolean": bool,
        "null": type(None),
    }

    def grade(self, output: str, trace: Trace, rubric: Rubric) -> GradeResult:
        try:
            value = json.loads(output)
        except json.JSONDecodeError as exc:
            return GradeResult(passed=False, error_code="schema_violation", details=f"not JSON: {exc}")
        if not isinstance(value, dict):
            return GradeResult(passed=False, error_code="schema_violation", details="not an object")
        for name, type_name in self.required.items():
            if name not in value:
                return GradeResult(
                    passed=False, error_code="schema_violation", details=f"missing field {name!r}"
                )
            if type_name == "any":
                continue
            expected = self._TYPES.get(type_name)
            if expected is None:
                return GradeResult(
                    passed=False, error_code="schema_violation", details=f"unknown type {type_name!r}"
                )
            checked = value[name]
            if isinstance(checked, bool) and type_name == "number":
                return GradeResult(
                    passed=False, error_code="schema_violation", details=f"field {name!r} is boolean"
                )
            if not isinstance(checked, expected):
                return GradeResult(
                    passed=False,
                    error_code="schema_violation",
                    details=f"field {name!r} is not {type_name}",
                )
        return GradeResult(passed=True)


@dataclass(frozen=True)
class RegexScorer:
    """Pass iff the whole output matches the configured pattern."""

    pattern: str

    def grade(self, output: str, trace: Trace, rubric: Rubric) -> GradeResult:
        if re.fullmatch(self.pattern, output) is not None:
            return GradeResult(passed=True)
        return GradeResult(passed=False, error_code="format_error", details="pattern mismatch")


@dataclass(frozen=True)
class SubprocessTestScorer:
    """Run a task-provided test command; expected exit code means pass.

    The command is a template with ``{output_file}`` and ``{workspace}``
    placeholders; each invocation gets a private temp workspace.
    """

    command: tuple[str, ...]
    timeout: float = 60.0
    expected_exit: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.command, tuple):
            object.__setattr__(self, "command", tuple(self.command))

    def grade(self, output: str, trace: Trace, rubric: Rubric) -> GradeResult:
        with tempfile.TemporaryDirectory(prefix="agentline-score-") as workspace:
            output_file = os.path.join(workspace, "output.txt")
            with open(output_file, "w", encoding="utf-8") as fh:
                fh.write(output)
            argv = [
                part.format(output_file=output_file, workspace=workspace)
                for part in self.command
            ]
            try:
                proc = subprocess.run(
                    argv,
                    cwd=workspace,
                    capture_output=True,
                    text=True,
                    timeout=self.timeout,
                )
            except subprocess.TimeoutExpired:
                return GradeResult(passed=False, error_code="test_timeout", details="")
            if proc.returncode == self.expected_exit:
                return GradeResult(passed=True)
            return GradeResult(
                passed=False,
                error_code="test_failed",
                details=f"exit {proc.returncode}: {proc.stderr[:200]}",
            )


@dataclass(frozen=True)
class ScriptedScorer:
    """Test double: a fixed verdict table keyed by example id."""

    verdicts: Mapping[str, bool]
    error_code: str = "wrong_answer"

    def grade(self, output: str, trace: Trace, rubric: Rubric) -> GradeResult:
        passed = self.verdicts.get(trace.example_id, False)
        if passed:
            return GradeResult(passed=True)
        return GradeResult(passed=False, error_code=self.error_code)


__all__ = [
    "Scorer",
    "score",
    "final_pass",
    "ExactMatchScorer",
    "SchemaScorer",
    "RegexScorer",
    "SubprocessTestScorer",
    "ScriptedScorer",
]
