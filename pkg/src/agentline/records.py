"""Shared domain types: datasets, rubrics, traces, grades, verdicts, quality records.

Everything here is an immutable value object, safe to share across threads.
Records serialize to line-delimited JSON (one record per line) so external
diagnostic scripts in any language can stream them; unknown fields found on
parse are preserved and round-trip untouched.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .canonical import canonical_json

SPLITS = ("train", "test")
STEP_KINDS = ("action", "tool_call", "observation", "error", "final_output")


class RecordError(ValueError):
    """A domain value violates one of its invariants."""


class RecordParseError(RecordError):
    """A serialized record stream could not be parsed."""


@dataclass(frozen=True)
class Example:
    """One task case. ``input`` is an opaque payload; ``split`` is immutable."""

    id: str
    input: Any
    split: str = "train"

    def __post_init__(self) -> None:
        if not self.id:
            raise RecordError("example id must be non-empty")
        if self.split not in SPLITS:
            raise RecordError(f"unknown split {self.split!r}, expected one of {SPLITS}")

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "input": self.input, "split": self.split}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Example":
        return cls(id=data["id"], input=data["input"], split=data.get("split", "train"))


class TestSetHygieneError(RuntimeError):
    """The held-out test split was accessed outside the final-report path."""

    __test__ = False  # keep pytest from collecting this as a test class


class Dataset:
    """A collection of examples with train/test splits and instrumented access.

    Reads of the test split are counted and refused unless the caller is on
    the final-report path; the counter is what the hygiene audit inspects.
    """

    def __init__(self, examples: Iterable[Example]):
        self._examples: list[Example] = list(examples)
        seen: set[str] = set()
        for ex in self._examples:
            if ex.id in seen:
                raise RecordError(f"duplicate example id {ex.id!r} in dataset")
            seen.add(ex.id)
        self.split_reads: dict[str, int] = {"train": 0, "test": 0}

    def __len__(self) -> int:
        return len(self._examples)

    def examples(self, split: str, *, allow_test: bool = False) -> list[Example]:
        if split not in SPLITS:
            raise RecordError(f"unknown split {split!r}")
        if split == "test" and not allow_test:
            raise TestSetHygieneError(
                "test split is reserved for a single final evaluation; "
                "read it only through the final-report path"
            )
        self.split_reads[split] += 1
        return [ex for ex in self._examples if ex.split == split]

    def size(self, split: str) -> int:
        # Counting does not constitute a read of the examples themselves.
        return sum(1 for ex in self._examples if ex.split == split)

    def to_dicts(self) -> list[dict[str, Any]]:
        return [ex.to_dict() for ex in self._examples]

    @classmethod
    def from_dicts(cls, rows: Iterable[Mapping[str, Any]]) -> "Dataset":
        return cls(Example.from_dict(row) for row in rows)

    @classmethod
    def from_jsonl(cls, path: Any) -> "Dataset":
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rows.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise RecordParseError(f"malformed dataset line {lineno}: {exc}") from exc
        return cls.from_dicts(rows)


@dataclass(frozen=True)
class RubricCheck:
    """One named grading criterion.

    The rule-based critic understands three machine-checkable name forms:
    ``required_step:<tool>``, ``step_order:<first>-><second>`` and
    ``args_json:<tool>``; anything else is prose for human or LLM critics.
    """

    name: str
    description: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "description": self.description}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RubricCheck":
        return cls(name=data["name"], description=data.get("description", ""))


@dataclass(frozen=True)
class Rubric:
    id: str
    text: str
    checks: tuple[RubricCheck, ...] = ()

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise RecordError("rubric text must be non-empty")
        if not isinstance(self.checks, tuple):
            object.__setattr__(self, "checks", tuple(self.checks))

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "text": self.text, "checks": [c.to_dict() for c in self.checks]}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Rubric":
        return cls(
            id=data["id"],
            text=data["text"],
            checks=tuple(RubricCheck.from_dict(c) for c in data.get("checks", ())),
        )


@dataclass(frozen=True)
class TraceStep:
    """One execution step. ``index`` must equal the position in the parent list."""

    index: int
    kind: str
    payload: str
    tool_name: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in STEP_KINDS:
            raise RecordError(f"unknown step kind {self.kind!r}")
        if self.index < 0:
            raise RecordError("step index must be >= 0")
        if self.kind == "tool_call" and not self.tool_name:
            raise RecordError("tool_call steps require tool_name")
        if self.kind != "tool_call" and self.tool_name is not None:
            raise RecordError("tool_name is only valid on tool_call steps")

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"index": self.index, "kind": self.kind, "payload": self.payload}
        if self.tool_name is not None:
            data["tool_name"] = self.tool_name
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TraceStep":
        return cls(
            index=data["index"],
            kind=data["kind"],
            payload=data["payload"],
            tool_name=data.get("tool_name"),
        )


@dataclass(frozen=True)
class Trace:
    """Ordered execution record for one example."""

    example_id: str
    steps: tuple[TraceStep, ...] = ()
    final_output: str = ""

    def __post_init__(self) -> None:
        if not self.example_id:
            raise RecordError("trace.example_id must be set")
        if not isinstance(self.steps, tuple):
            object.__setattr__(self, "steps", tuple(self.steps))
        for pos, step in enumerate(self.steps):
            if step.index != pos:
                raise RecordError(f"step index {step.index} at position {pos} breaks ordering")
        finals = [s for s in self.steps if s.kind == "final_output"]
        if len(finals) > 1:
            raise RecordError("at most one final_output step is allowed")
        if finals and self.steps[-1].kind != "final_output":
            raise RecordError("final_output step must be last")

    @property
    def last_step(self) -> TraceStep | None:
        return self.steps[-1] if self.steps else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "example_id": self.example_id,
            "steps": [s.to_dict() for s in self.steps],
            "final_output": self.final_output,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Trace":
        return cls(
            example_id=data["example_id"],
            steps=tuple(TraceStep.from_dict(s) for s in data.get("steps", ())),
            final_output=data.get("final_output", ""),
        )


@dataclass(frozen=True)
class GradeResult:
    """Hard pass/fail signal from a programmatic scorer."""

    passed: bool
    error_code: str | None = None
    details: str = ""

    def __post_init__(self) -> None:
        if self.passed and self.error_code is not None:
            raise RecordError("error_code must be absent when passed")

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "error_code": self.error_code, "details": self.details}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GradeResult":
        return cls(
            passed=data["passed"],
            error_code=data.get("error_code"),
            details=data.get("details", ""),
        )


@dataclass(frozen=True)
class CriticVerdict:
    """Soft signal from the implementation-blind critic: (judgment, label, description).

    The schema deliberately has no field for causes or fixes; the critic is
    restricted to symptom-level characterization.
    """

    pass_judgment: bool
    symptom_label: str = ""
    description: str = ""

    def __post_init__(self) -> None:
        if not self.pass_judgment and not self.symptom_label:
            raise RecordError("failing verdicts require a symptom_label")

    def to_dict(self) -> dict[str, Any]:
        return {
            "pass": self.pass_judgment,
            "symptom_label": self.symptom_label,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CriticVerdict":
        return cls(
            pass_judgment=data["pass"],
            symptom_label=data.get("symptom_label", ""),
            description=data.get("description", ""),
        )


_RECORD_FIELDS = {"example_id", "iteration", "output", "trace", "grade", "critic", "final_pass"}


@dataclass(frozen=True)
class QualityRecord:
    """The per-example quality tuple consumed by diagnosis.

    ``grade`` is explicitly optional: ``None`` means "no programmatic scorer
    exists for this task", which downstream scripts must be able to tell
    apart from "the scorer failed". ``final_pass`` is the hard signal when a
    grade is present, the critic judgment otherwise.
    """

    example_id: str
    output: str
    trace: Trace
    grade: GradeResult | None
    critic: CriticVerdict
    final_pass: bool
    iteration: int
    extra: dict[str, Any] = field(default_factory=dict, compare=True)

    def __post_init__(self) -> None:
        if self.example_id != self.trace.example_id:
            raise RecordError(
                f"record example_id {self.example_id!r} != trace example_id "
                f"{self.trace.example_id!r}"
            )

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "example_id": self.example_id,
            "iteration": self.iteration,
            "output": self.output,
            "trace": self.trace.to_dict(),
            # Absent grade is an explicit null, never an omitted key.
            "grade": self.grade.to_dict() if self.grade is not None else None,
            "critic": self.critic.to_dict(),
            "final_pass": self.final_pass,
        }
        for key, value in self.extra.items():
            if key not in _RECORD_FIELDS:
                data[key] = value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "QualityRecord":
        extra = {k: v for k, v in data.items() if k not in _RECORD_FIELDS}
        grade = data.get("grade")
        return cls(
            example_id=data["example_id"],
            output=data.get("output", ""),
            trace=Trace.from_dict(data["trace"]),
            grade=GradeResult.from_dict(grade) if grade is not None else None,
            critic=CriticVerdict.from_dict(data["critic"]),
            final_pass=data["final_pass"],
            iteration=data["iteration"],
            extra=extra,
        )


def make_quality_record(
    output: str,
    trace: Trace,
    grade: GradeResult | None,
    verdict: CriticVerdict,
    iteration: int,
    *,
    example_id: str | None = None,
) -> QualityRecord:
    """Assemble a QualityRecord, computing final_pass by the fallback rule.

    ``example_id``, when given, must match the trace; this is the guard
    against wiring one example's trace to another's verdict.
    """
    if example_id is not None and example_id != trace.example_id:
        raise RecordError(
            f"example id mismatch: expected {example_id!r}, trace has {trace.example_id!r}"
        )
    from .scoring import final_pass  # deferred: scoring builds on these types

    return QualityRecord(
        example_id=trace.example_id,
        output=output,
        trace=trace,
        grade=grade,
        critic=verdict,
        final_pass=final_pass(grade, verdict),
        iteration=iteration,
    )


def serialize_records(records: Iterable[QualityRecord]) -> bytes:
    """One canonical-JSON record per line; deterministic byte-for-byte."""
    lines = [canonical_json(r.to_dict()) for r in records]
    if not lines:
        return b""
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_records(stream: bytes | str) -> list[QualityRecord]:
    """Inverse of :func:`serialize_records`; errors name the offending line."""
    text = stream.decode("utf-8") if isinstance(stream, bytes) else stream
    records: list[QualityRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            record = QualityRecord.from_dict(data)
        except (json.JSONDecodeError, KeyError, TypeError, RecordError) as exc:
            raise RecordParseError(f"malformed record on line {lineno}: {exc}") from exc
        if record.example_id in seen:
            raise RecordParseError(
                f"duplicate example_id {record.example_id!r} on line {lineno}"
            )
        seen.add(record.example_id)
        records.append(record)
    return records


@dataclass(frozen=True)
class SymptomTaxonomy:
    """Open-ended, monotone-growing set of symptom labels.

    Labels are free-form lowercase snake-case strings. Updates only ever add;
    existing labels keep their order and first_seen iteration forever.
    """

    labels: tuple[str, ...] = ()
    first_seen: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.labels, tuple):
            object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise RecordError("taxonomy labels must be unique")
        object.__setattr__(self, "first_seen", dict(self.first_seen))

    def __contains__(self, label: str) -> bool:
        return label in self.first_seen

    def to_dict(self) -> dict[str, Any]:
        return {"labels": list(self.labels), "first_seen": dict(self.first_seen)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SymptomTaxonomy":
        return cls(labels=tuple(data["labels"]), first_seen=dict(data["first_seen"]))


def merge_taxonomy(
    taxonomy: SymptomTaxonomy, new_labels: Iterable[str], iteration: int
) -> SymptomTaxonomy:
    """Union in new labels; idempotent on duplicates, order-preserving."""
    labels = list(taxonomy.labels)
    first_seen = dict(taxonomy.first_seen)
    for label in new_labels:
        if not label:
            continue
        if label not in first_seen:
            labels.append(label)
            first_seen[label] = iteration
    return SymptomTaxonomy(labels=tuple(labels), first_seen=first_seen)


def normalize_label(raw: str) -> str:
    """Lowercase snake-case normalization for symptom labels."""
    cleaned = []
    for ch in raw.strip().lower():
        if ch.isalnum():
            cleaned.append(ch)
        elif ch in (" ", "-", "_", "/", ".", ":"):
            cleaned.append("_")
    label = "".join(cleaned)
    while "__" in label:
        label = label.replace("__", "_")
    return label.strip("_")


__all__ = [
    "SPLITS",
    "STEP_KINDS",
    "RecordError",
    "RecordParseError",
    "TestSetHygieneError",
    "Example",
    "Dataset",
    "Rubric",
    "RubricCheck",
    "Trace",
    "TraceStep",
    "GradeResult",
    "CriticVerdict",
    "QualityRecord",
    "SymptomTaxonomy",
    "make_quality_record",
    "serialize_records",
    "parse_records",
    "merge_taxonomy",
    "normalize_label",
]
