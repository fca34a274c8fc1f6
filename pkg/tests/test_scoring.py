"""Programmatic scorers and the final pass indicator."""

from __future__ import annotations

import itertools
import random

import pytest

from agentline.records import CriticVerdict, GradeResult, Rubric
from agentline.scoring import (
    ExactMatchScorer,
    RegexScorer,
    SchemaScorer,
    ScriptedScorer,
    SubprocessTestScorer,
    final_pass,
    score,
)
from conftest import make_trace

RUBRIC = Rubric(id="r", text="output must match")


def test_exact_match_pass():
    scorer = ExactMatchScorer(answers={"e1": "42"})
    assert score(scorer, "42", make_trace("e1"), RUBRIC).passed is True


def test_exact_match_fail_carries_code():
    scorer = ExactMatchScorer(answers={"e1": "42"})
    grade = score(scorer, "41", make_trace("e1"), RUBRIC)
    assert grade.passed is False
    assert grade.error_code == "wrong_answer"


def test_schema_scorer_missing_field():
    scorer = SchemaScorer(required={"name": "string", "count": "number"})
    grade = score(scorer, '{"name": "x"}', make_trace("e1"), RUBRIC)
    assert grade.passed is False
    assert grade.error_code == "schema_violation"


def test_schema_scorer_accepts_valid_document():
    scorer = SchemaScorer(required={"name": "string", "count": "number"})
    assert score(scorer, '{"name": "x", "count": 3}', make_trace("e1"), RUBRIC).passed


def test_schema_scorer_rejects_bool_as_number():
    scorer = SchemaScorer(required={"count": "number"})
    assert not score(scorer, '{"count": true}', make_trace("e1"), RUBRIC).passed


def _reference_matcher(text: str) -> bool:
    # Independent oracle for the pattern dddd-aa: hand-rolled, no regex.
    if len(text) != 7 or text[4] != "-":
        return False
    return all(c.isdigit() for c in text[:4]) and all(
        "a" <= c <= "z" for c in text[5:]
    )


def test_regex_scorer_matches_independent_matcher():
    scorer = RegexScorer(pattern=r"[0-9]{4}-[a-z]{2}")
    rng = random.Random(5)
    alphabet = "0123456789abcxyz-"
    for _ in range(100):
        text = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 9)))
        expected = _reference_matcher(text)
        assert score(scorer, text, make_trace("e"), RUBRIC).passed == expected


class _CrashingScorer:
    def grade(self, output, trace, rubric):
        raise RuntimeError("scorer exploded")


def test_scorer_crash_maps_to_failing_grade():
    grade = score(_CrashingScorer(), "x", make_trace("e1"), RUBRIC)
    assert grade.passed is False
    assert grade.error_code == "scorer_error"


class _FlakyScorer:
    def __init__(self):
        self.calls = 0

    def grade(self, output, trace, rubric):
        self.calls += 1
        return GradeResult(passed=self.calls % 2 == 1)


def test_determinism_check_catches_flaky_scorer():
    with pytest.raises(RuntimeError, match="non-deterministic"):
        score(_FlakyScorer(), "x", make_trace("e1"), RUBRIC, check_determinism=True)


def test_subprocess_test_scorer_runs_command():
    passing = SubprocessTestScorer(command=("grep", "-q", "ok", "{output_file}"), timeout=10)
    assert score(passing, "all ok here", make_trace("e1"), RUBRIC).passed is True
    grade = score(passing, "nope", make_trace("e1"), RUBRIC)
    assert grade.passed is False
    assert grade.error_code == "test_failed"


def test_scripted_scorer_table():
    scorer = ScriptedScorer(verdicts={"a": True, "b": False})
    assert score(scorer, "", make_trace("a"), RUBRIC).passed is True
    assert score(scorer, "", make_trace("b"), RUBRIC).passed is False


class TestFinalPass:
    def test_hard_signal_wins(self):
        grade = GradeResult(passed=False, error_code="x")
        verdict = CriticVerdict(pass_judgment=True)
        assert final_pass(grade, verdict) is False

    def test_critic_fallback(self):
        verdict = CriticVerdict(pass_judgment=False, symptom_label="tool_error")
        assert final_pass(None, verdict) is False

    def test_exhaustive_truth_table(self):
        grades = {
            "pass": GradeResult(passed=True),
            "fail": GradeResult(passed=False, error_code="x"),
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
        for (g_name, c_pass) in itertools.product(grades, [True, False]):
            verdict = CriticVerdict(
                pass_judgment=c_pass, symptom_label="" if c_pass else "s"
            )
            assert final_pass(grades[g_name], verdict) == expected[(g_name, c_pass)]

    def test_dominance_property(self):
        # With a grade present, flipping the critic judgment never changes p.
        for passed in (True, False):
            grade = GradeResult(passed=passed) if passed else GradeResult(passed=False, error_code="e")
            yes = final_pass(grade, CriticVerdict(pass_judgment=True))
            no = final_pass(grade, CriticVerdict(pass_judgment=False, symptom_label="s"))
            assert yes == no == passed
