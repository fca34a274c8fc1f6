"""Release-candidate synthesis: one unified change package per iteration.

Diffs are whole-file replacements with hash preconditions: every modify or
delete names the hash of the file it expects to replace, so a stale diff is
detected exactly rather than applied approximately. The RC carries a change
intent naming which diagnosed symptom classes it targets; the intent is
descriptive, not causal, and must be grounded in the diagnosis report it
cites.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any, Mapping

from .canonical import canonical_json, sha256_hex
from .diagnosis import DiagnosisReport
from .generators import Generator, GeneratorError
from .harness import Blueprint
from .records import SymptomTaxonomy

logger = logging.getLogger(__name__)

MAX_RATIONALE_LEN = 2000


class DiffError(ValueError):
    """A diff cannot be applied to the blueprint it claims to be based on."""


class RcSynthesisError(RuntimeError):
    """The generator could not produce an applicable release candidate."""


@dataclass(frozen=True)
class ChangeIntent:
    target_symptoms: tuple[str, ...]
    rationale: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.target_symptoms, tuple):
            object.__setattr__(self, "target_symptoms", tuple(self.target_symptoms))
        if not self.target_symptoms:
            raise ValueError("change intent must target at least one symptom")
        if len(self.rationale) > MAX_RATIONALE_LEN:
            raise ValueError(f"rationale exceeds {MAX_RATIONALE_LEN} characters")

    def to_dict(self) -> dict[str, Any]:
        return {"target_symptoms": list(self.target_symptoms), "rationale": self.rationale}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ChangeIntent":
        return cls(
            target_symptoms=tuple(data["target_symptoms"]),
            rationale=data.get("rationale", ""),
        )


@dataclass(frozen=True)
class FileOp:
    """One whole-file operation: add, modify, or delete."""

    op: str
    path: str
    old_hash: str | None = None  # required for modify/delete
    content: str | None = None  # required for add/modify

    def __post_init__(self) -> None:
        if self.op not in ("add", "modify", "delete"):
            raise DiffError(f"unknown file op {self.op!r}")
        if self.op in ("modify", "delete") and not self.old_hash:
            raise DiffError(f"{self.op} of {self.path!r} requires old_hash")
        if self.op in ("add", "modify") and self.content is None:
            raise DiffError(f"{self.op} of {self.path!r} requires content")
        if self.op == "add" and self.old_hash is not None:
            raise DiffError(f"add of {self.path!r} must not carry old_hash")

    def to_dict(self) -> dict[str, Any]:
        return {"op": self.op, "path": self.path, "old_hash": self.old_hash, "content": self.content}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FileOp":
        return cls(
            op=data["op"],
            path=data["path"],
            old_hash=data.get("old_hash"),
            content=data.get("content"),
        )


@dataclass(frozen=True)
class BlueprintDiff:
    base_version: str
    operations: tuple[FileOp, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.operations, tuple):
            object.__setattr__(self, "operations", tuple(self.operations))
        if not self.operations:
            raise DiffError("a diff must contain at least one operation")
        paths = [op.path for op in self.operations]
        if len(set(paths)) != len(paths):
            raise DiffError("a diff may touch each path at most once")

    def to_dict(self) -> dict[str, Any]:
        return {
            "base_version": self.base_version,
            "operations": [op.to_dict() for op in self.operations],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BlueprintDiff":
        return cls(
            base_version=data["base_version"],
            operations=tuple(FileOp.from_dict(op) for op in data["operations"]),
        )

    @property
    def content_hash(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()))


@dataclass(frozen=True)
class ReleaseCandidate:
    rc_id: str
    base_version: str
    diff: BlueprintDiff
    intent: ChangeIntent
    diagnosis_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "rc_id": self.rc_id,
            "base_version": self.base_version,
            "diff": self.diff.to_dict(),
            "intent": self.intent.to_dict(),
            "diagnosis_hash": self.diagnosis_hash,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ReleaseCandidate":
        return cls(
            rc_id=data["rc_id"],
            base_version=data["base_version"],
            diff=BlueprintDiff.from_dict(data["diff"]),
            intent=ChangeIntent.from_dict(data["intent"]),
            diagnosis_hash=data["diagnosis_hash"],
        )


def file_hash(content: str) -> str:
    return sha256_hex(content)


def apply_diff(blueprint: Blueprint, diff: BlueprintDiff, *, rc_id: str) -> Blueprint:
    """Pure application: returns a new blueprint, never mutates the base.

    Succeeds exactly when the base version matches and every old hash is
    current; a modify that rewrites identical content is rejected as a no-op
    so empty changes cannot masquerade as release candidates.
    """
    if diff.base_version != blueprint.version_id:
        raise DiffError(
            f"diff base {diff.base_version!r} does not match blueprint "
            f"{blueprint.version_id!r}"
        )
    files = dict(blueprint.files)
    for op in diff.operations:
        if op.op == "add":
            if op.path in files:
                raise DiffError(f"add of existing file {op.path!r}")
            files[op.path] = op.content or ""
        elif op.op == "modify":
            if op.path not in files:
                raise DiffError(f"modify of missing file {op.path!r}")
            current = file_hash(files[op.path])
            if current != op.old_hash:
                raise DiffError(
                    f"stale diff: {op.path!r} has hash {current[:12]}, "
                    f"diff expects {str(op.old_hash)[:12]}"
                )
            if files[op.path] == op.content:
                raise DiffError(f"no-op modify of {op.path!r} (identical content)")
            files[op.path] = op.content or ""
        else:  # delete
            if op.path not in files:
                raise DiffError(f"delete of missing file {op.path!r}")
            current = file_hash(files[op.path])
            if current != op.old_hash:
                raise DiffError(
                    f"stale diff: {op.path!r} has hash {current[:12]}, "
                    f"diff expects {str(op.old_hash)[:12]}"
                )
            del files[op.path]
    return Blueprint(
        version_id=rc_id,
        files=files,
        metadata=dict(blueprint.metadata),
        parent=blueprint.version_id,
    )


def invert_diff(blueprint: Blueprint, diff: BlueprintDiff, *, rc_id: str) -> BlueprintDiff:
    """Diff that undoes ``diff`` when applied to its result (test utility)."""
    inverse: list[FileOp] = []
    for op in diff.operations:
        if op.op == "add":
            inverse.append(
                FileOp(op="delete", path=op.path, old_hash=file_hash(op.content or ""))
            )
        elif op.op == "modify":
            inverse.append(
                FileOp(
                    op="modify",
                    path=op.path,
                    old_hash=file_hash(op.content or ""),
                    content=blueprint.files[op.path],
                )
            )
        else:
            inverse.append(FileOp(op="add", path=op.path, content=blueprint.files[op.path]))
    return BlueprintDiff(base_version=rc_id, operations=tuple(inverse))


def validate_intent(
    intent: ChangeIntent, taxonomy: SymptomTaxonomy, diagnosis: DiagnosisReport
) -> None:
    unknown = [t for t in intent.target_symptoms if t not in taxonomy]
    if unknown:
        raise RcSynthesisError(f"intent targets unknown symptoms {unknown}")
    dominant = set(diagnosis.dominant_labels())
    ungrounded = [t for t in intent.target_symptoms if t not in dominant]
    if ungrounded:
        raise RcSynthesisError(
            f"intent targets {ungrounded} not present in the diagnosis report"
        )


def _parse_rc_response(response: str, base: Blueprint, rc_id: str) -> tuple[BlueprintDiff, ChangeIntent]:
    try:
        data = json.loads(response)
        diff = BlueprintDiff.from_dict(
            {"base_version": data.get("base_version", base.version_id), "operations": data["operations"]}
        )
        intent = ChangeIntent.from_dict(data["intent"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError, DiffError) as exc:
        raise RcSynthesisError(f"unusable RC response: {exc}") from exc
    return diff, intent


def synthesize_rc(
    generator: Generator,
    blueprint: Blueprint,
    diagnosis: DiagnosisReport,
    taxonomy: SymptomTaxonomy,
    seed: int,
    *,
    rc_id: str,
) -> ReleaseCandidate | None:
    """Produce exactly one release candidate grounded in the diagnosis.

    Returns None when the diagnosis reports no failures (convergence — there
    is nothing to candidate). An inapplicable diff earns one repair retry
    with the mismatch shown to the generator; a second failure raises
    :class:`RcSynthesisError`, which the pipeline records as ``rc_failed``.
    """
    if diagnosis.is_clean:
        return None

    request_body = {
        "kind": "rc_request",
        "rc_id": rc_id,
        "blueprint": blueprint.to_dict(),
        "diagnosis": diagnosis.to_dict(),
        "known_labels": list(taxonomy.labels),
        "instructions": (
            "Propose one unified change package as JSON: {\"operations\": "
            "[{op, path, old_hash, content}...], \"intent\": {target_symptoms, "
            "rationale}}. Target symptoms must come from the diagnosis report."
        ),
    }
    failure: str | None = None
    for attempt in range(2):
        request = dict(request_body)
        if failure is not None:
            request["repair"] = failure
        try:
            response = generator.generate(canonical_json(request), seed)
        except GeneratorError as exc:
            failure = f"generator error: {exc}"
            logger.warning("rc synthesis attempt %d failed: %s", attempt + 1, exc)
            continue
        try:
            diff, intent = _parse_rc_response(response, blueprint, rc_id)
            validate_intent(intent, taxonomy, diagnosis)
            apply_diff(blueprint, diff, rc_id=rc_id)  # applicability check only
        except (RcSynthesisError, DiffError) as exc:
            failure = str(exc)
            logger.warning("rc synthesis attempt %d rejected: %s", attempt + 1, exc)
            continue
        return ReleaseCandidate(
            rc_id=rc_id,
            base_version=blueprint.version_id,
            diff=diff,
            intent=intent,
            diagnosis_hash=diagnosis.content_hash,
        )
    raise RcSynthesisError(f"no applicable release candidate after retry: {failure}")


__all__ = [
    "MAX_RATIONALE_LEN",
    "DiffError",
    "RcSynthesisError",
    "ChangeIntent",
    "FileOp",
    "BlueprintDiff",
    "ReleaseCandidate",
    "file_hash",
    "apply_diff",
    "invert_diff",
    "validate_intent",
    "synthesize_rc",
]
