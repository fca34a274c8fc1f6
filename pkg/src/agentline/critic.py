"""The implementation-blind critic: symptom-level verdicts from rubric + trace + grade.

The critic never sees the blueprint. Its input is a pure function of
(rubric, trace, grade, taxonomy snapshot); blindness is enforced
structurally by scanning the serialized input against the blueprint's path
set and file contents. Verdicts carry exactly three fields — judgment,
symptom label, short description — and the parser rejects anything more,
so repairs and causal claims cannot leak in through this channel.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any, Mapping

from .canonical import canonical_json, sha256_hex
from .generators import Generator
from .harness import Blueprint
from .records import (
    CriticVerdict,
    GradeResult,
    Rubric,
    SymptomTaxonomy,
    Trace,
    normalize_label,
)

logger = logging.getLogger(__name__)

# Below this length a file body is too generic to scan for (think "{}" or "x");
# paths are always scanned.
_MIN_CONTENT_SCAN_LEN = 12

PARSE_FAILURE_LABEL = "critic_parse_failure"


class BlindnessViolation(RuntimeError):
    """Blueprint material reached the critic through a protected channel."""


@dataclass(frozen=True)
class CriticInput:
    """Everything the critic is allowed to observe for one example."""

    rubric: Rubric
    trace: Trace
    grade: GradeResult | None
    known_labels: tuple[str, ...] = ()
    # Ablation-only escape hatch; tainting the input this way is unsafe by
    # design and never happens unless the non-blind arm is explicitly enabled.
    unsafe_blueprint_context: Mapping[str, str] | None = None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "rubric": self.rubric.to_dict(),
            "trace": self.trace.to_dict(),
            "known_labels": list(self.known_labels),
        }
        if self.grade is not None:
            data["grade"] = self.grade.to_dict()
        if self.unsafe_blueprint_context is not None:
            data["unsafe_blueprint_context"] = dict(self.unsafe_blueprint_context)
        return data

    def serialized(self) -> str:
        return canonical_json(self.to_dict())

    def digest(self) -> str:
        return sha256_hex(self.serialized())


def build_critic_input(
    rubric: Rubric,
    trace: Trace,
    grade: GradeResult | None,
    taxonomy: SymptomTaxonomy,
    *,
    unsafe_blueprint_context: Mapping[str, str] | None = None,
) -> CriticInput:
    """Assemble the critic's view. A pure function of its arguments: for a
    fixed (rubric, trace, grade, taxonomy) the serialized input — and hence
    its hash — is identical no matter which blueprint produced the trace.

    When a grade is absent the serialized form omits the section entirely.
    """
    return CriticInput(
        rubric=rubric,
        trace=trace,
        grade=grade,
        known_labels=tuple(taxonomy.labels),
        unsafe_blueprint_context=unsafe_blueprint_context,
    )


def check_blindness(critic_input: CriticInput, blueprint: Blueprint) -> None:
    """Verify no blueprint material entered through a protected channel.

    Protected channels (rubric text, check names/descriptions, taxonomy
    labels) must not contain any blueprint path or file content: a match is
    a hard error and the iteration must abort. The trace channel is exempt —
    an agent may legitimately echo its own prompt into a trace — but a match
    there is logged for the audit trail.
    """
    protected = "\n".join(
        [critic_input.rubric.text]
        + [f"{c.name} {c.description}" for c in critic_input.rubric.checks]
        + list(critic_input.known_labels)
    )
    lenient = "\n".join(
        [critic_input.trace.final_output] + [s.payload for s in critic_input.trace.steps]
    )
    needles: list[tuple[str, str]] = [(p, f"path {p!r}") for p in blueprint.files]
    for path, content in blueprint.files.items():
        body = content.strip()
        if len(body) >= _MIN_CONTENT_SCAN_LEN:
            needles.append((body, f"content of {path!r}"))
    for needle, what in needles:
        if needle in protected:
            raise BlindnessViolation(
                f"blueprint {what} leaked into a protected critic channel"
            )
        if needle in lenient:
            logger.warning(
                "blueprint %s appears inside a trace for %s; allowed (trace channel) "
                "but recorded for audit",
                what,
                critic_input.trace.example_id,
            )


_VERDICT_FIELDS = {"pass", "symptom_label", "description"}

_CRITIC_INSTRUCTIONS = (
    "Judge the execution against the rubric. Respond with a single JSON object "
    'with exactly three fields: "pass" (boolean), "symptom_label" (lowercase '
    "snake_case surface symptom, empty when passing; reuse a known label when one "
    'fits), "description" (one short sentence describing the observed symptom). '
    "Do not name causes. Do not propose fixes."
)


def critic_request(critic_input: CriticInput) -> str:
    return canonical_json(
        {
            "kind": "critic_request",
            "instructions": _CRITIC_INSTRUCTIONS,
            "input": critic_input.to_dict(),
        }
    )


def _parse_verdict(response: str) -> CriticVerdict:
    data = json.loads(response)
    if not isinstance(data, dict):
        raise ValueError("verdict must be a JSON object")
    extra = set(data) - _VERDICT_FIELDS
    if extra:
        raise ValueError(f"verdict carries unexpected fields {sorted(extra)}")
    missing = _VERDICT_FIELDS - set(data)
    if missing:
        raise ValueError(f"verdict is missing fields {sorted(missing)}")
    if not isinstance(data["pass"], bool):
        raise ValueError("verdict 'pass' must be a boolean")
    label = normalize_label(str(data["symptom_label"]))
    if not data["pass"] and not label:
        raise ValueError("failing verdict requires a symptom label")
    return CriticVerdict(
        pass_judgment=data["pass"],
        symptom_label=label,
        description=str(data["description"])[:500],
    )


def judge(generator: Generator, critic_input: CriticInput, seed: int) -> CriticVerdict:
    """Obtain one verdict. Unparseable responses get one structured retry,
    after which the example is marked with the parse-failure symptom rather
    than killing the iteration.
    """
    request = critic_request(critic_input)
    try:
        return _parse_verdict(generator.generate(request, seed))
    except (ValueError, KeyError, TypeError) as exc:
        first_error = str(exc)
    retry_request = canonical_json(
        {
            "kind": "critic_request_retry",
            "instructions": _CRITIC_INSTRUCTIONS,
            "parse_error": first_error,
            "input": critic_input.to_dict(),
        }
    )
    try:
        return _parse_verdict(generator.generate(retry_request, seed))
    except (ValueError, KeyError, TypeError) as exc:
        logger.error(
            "critic response unparseable after retry for %s: %s",
            critic_input.trace.example_id,
            exc,
        )
        return CriticVerdict(
            pass_judgment=False,
            symptom_label=PARSE_FAILURE_LABEL,
            description=f"unparseable critic response: {first_error[:200]}",
        )


@dataclass
class RuleBasedCritic:
    """Deterministic pattern critic over trace shape and rubric checks.

    This is the default generator for tests and simulator runs, so the whole
    primary pipeline works with no external model. Rules, in order:

    1. grade present and passed -> pass
    2. trace ends in an error step -> ``timeout`` or ``tool_error``
    3. rubric check ``required_step:<tool>`` unsatisfied -> ``missing_required_step``
    4. rubric check ``step_order:<a>-><b>`` violated -> ``wrong_action_order``
    5. rubric check ``args_json:<tool>`` violated -> ``invalid_tool_arguments``
    6. any earlier error step -> ``tool_error``
    7. empty final output -> ``empty_output``
    8. grade present and failed -> grade error code as label (or ``incorrect_output``)
    9. otherwise -> pass
    """

    def generate(self, request: str, seed: int) -> str:
        doc = json.loads(request)
        payload = doc["input"]
        trace = Trace.from_dict(payload["trace"])
        rubric = Rubric.from_dict(payload["rubric"])
        grade_data = payload.get("grade")
        verdict = self._apply_rules(trace, rubric, grade_data)
        return canonical_json(verdict)

    def _apply_rules(
        self, trace: Trace, rubric: Rubric, grade: Mapping[str, Any] | None
    ) -> dict[str, Any]:
        def fail(label: str, description: str) -> dict[str, Any]:
            return {"pass": False, "symptom_label": label, "description": description}

        if grade is not None and grade.get("passed"):
            return {"pass": True, "symptom_label": "", "description": "meets rubric checks"}

        last = trace.last_step
        if last is not None and last.kind == "error":
            if last.payload.startswith("timeout"):
                return fail("timeout", "execution ended in a timeout error step")
            return fail("tool_error", "execution ended in an error step")

        tool_calls = [s for s in trace.steps if s.kind == "tool_call"]
        first_call_at = {}
        for step in tool_calls:
            first_call_at.setdefault(step.tool_name, step.index)

        for check in rubric.checks:
            name = check.name
            if name.startswith("required_step:"):
                tool = name.split(":", 1)[1]
                if tool not in first_call_at:
                    return fail(
                        "missing_required_step", f"no call to required tool {tool}"
                    )
            elif name.startswith("step_order:"):
                spec_part = name.split(":", 1)[1]
                if "->" in spec_part:
                    before, after = spec_part.split("->", 1)
                    if (
                        before in first_call_at
                        and after in first_call_at
                        and first_call_at[after] < first_call_at[before]
                    ):
                        return fail(
                            "wrong_action_order", f"{after} was called before {before}"
                        )
            elif name.startswith("args_json:"):
                tool = name.split(":", 1)[1]
                for step in tool_calls:
                    if step.tool_name != tool:
                        continue
                    try:
                        json.loads(step.payload)
                    except json.JSONDecodeError:
                        return fail(
                            "invalid_tool_arguments",
                            f"arguments to {tool} are not valid JSON",
                        )

        if any(s.kind == "error" for s in trace.steps):
            return fail("tool_error", "an error step occurred mid-execution")
        if not trace.final_output.strip():
            return fail("empty_output", "no final output was produced")
        if grade is not None and not grade.get("passed"):
            code = normalize_label(grade.get("error_code") or "") or "incorrect_output"
            return fail(code, "programmatic checks failed")
        return {"pass": True, "symptom_label": "", "description": "no symptom detected"}


__all__ = [
    "BlindnessViolation",
    "CriticInput",
    "PARSE_FAILURE_LABEL",
    "RuleBasedCritic",
    "build_critic_input",
    "check_blindness",
    "critic_request",
    "judge",
]
