"""Executable diagnosis: generate a script, run it in a sandbox, validate its report.

Scripts are untrusted generated code. They run as subprocesses against a
scratch copy of the record store with a scrubbed environment, CPU/time
limits, and a socket guard (for the Python runtime) injected via
sitecustomize; scripts receive no entropy source, so reruns on the same
records produce identical reports. A script's source and hash are always
persisted by the caller before its first execution (audit-before-run).

Script wire protocol: ``argv = [records_file, taxonomy_file, output_file]``;
the report is one JSON document written to ``output_file``; exit 0 means the
report is ready for validation.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import _template_diag
from .canonical import canonical_json, sha256_hex
from .generators import Generator, GeneratorError
from .records import QualityRecord, SymptomTaxonomy

logger = logging.getLogger(__name__)

DEFAULT_SCRIPT_TIMEOUT = 300.0

# Scripts declare their runtime by tag; unknown tags are refused up front.
SCRIPT_RUNTIMES: dict[str, tuple[str, ...]] = {
    "python": (sys.executable,),
    "node": ("node",),
}

_SOCKET_GUARD = """\
import socket

def _blocked(*args, **kwargs):
    raise RuntimeError("network access is disabled inside the diagnosis sandbox")

socket.socket = _blocked
socket.create_connection = _blocked
socket.getaddrinfo = _blocked
"""


class DiagnosisError(RuntimeError):
    pass


class ScriptExecutionError(DiagnosisError):
    """The script failed to run or produced an invalid report."""


@dataclass(frozen=True)
class DiagScript:
    """One diagnostic script with its provenance chain."""

    iteration: int
    source: str
    language: str = "python"
    parent_hash: str | None = None

    def __post_init__(self) -> None:
        if not self.source.strip():
            raise DiagnosisError("script source must be non-empty")
        if self.language not in SCRIPT_RUNTIMES:
            raise DiagnosisError(f"unknown script runtime {self.language!r}")

    @property
    def content_hash(self) -> str:
        return sha256_hex(self.source)

    def file_name(self) -> str:
        return "script.py" if self.language == "python" else "script.js"

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "source": self.source,
            "language": self.language,
            "content_hash": self.content_hash,
            "parent_hash": self.parent_hash,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DiagScript":
        script = cls(
            iteration=data["iteration"],
            source=data["source"],
            language=data.get("language", "python"),
            parent_hash=data.get("parent_hash"),
        )
        stored = data.get("content_hash")
        if stored is not None and stored != script.content_hash:
            raise DiagnosisError("stored script hash does not match source")
        return script


@dataclass(frozen=True)
class SymptomCount:
    label: str
    count: int
    share: float

    def to_dict(self) -> dict[str, Any]:
        return {"label": self.label, "count": self.count, "share": self.share}


@dataclass(frozen=True)
class DiagnosisReport:
    """Structured failure triage for one iteration."""

    iteration: int
    dominant_symptoms: tuple[SymptomCount, ...]
    trigger_patterns: tuple[tuple[str, tuple[str, ...]], ...]
    representative_examples: tuple[tuple[str, str, str], ...]  # (example_id, label, excerpt)
    affected_surface: Mapping[str, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "affected_surface", dict(self.affected_surface))

    @property
    def is_clean(self) -> bool:
        return not self.dominant_symptoms

    def dominant_labels(self) -> list[str]:
        return [s.label for s in self.dominant_symptoms]

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "dominant_symptoms": [s.to_dict() for s in self.dominant_symptoms],
            "trigger_patterns": [
                {"pattern": pattern, "example_ids": list(ids)}
                for pattern, ids in self.trigger_patterns
            ],
            "representative_examples": [
                {"example_id": ex_id, "label": label, "excerpt": excerpt}
                for ex_id, label, excerpt in self.representative_examples
            ],
            "affected_surface": dict(self.affected_surface),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DiagnosisReport":
        return cls(
            iteration=data["iteration"],
            dominant_symptoms=tuple(
                SymptomCount(label=s["label"], count=s["count"], share=s["share"])
                for s in data["dominant_symptoms"]
            ),
            trigger_patterns=tuple(
                (p["pattern"], tuple(p["example_ids"])) for p in data["trigger_patterns"]
            ),
            representative_examples=tuple(
                (r["example_id"], r["label"], r["excerpt"])
                for r in data["representative_examples"]
            ),
            affected_surface=dict(data["affected_surface"]),
        )

    @property
    def content_hash(self) -> str:
        return sha256_hex(canonical_json(self.to_dict()))


def template_script(iteration: int, parent_hash: str | None = None) -> DiagScript:
    """The built-in aggregator, shipped as a real script file."""
    source = Path(_template_diag.__file__).read_text(encoding="utf-8")
    return DiagScript(
        iteration=iteration, source=source, language="python", parent_hash=parent_hash
    )


def template_report(
    records: Sequence[QualityRecord], taxonomy: SymptomTaxonomy
) -> DiagnosisReport:
    """In-process path through the exact same logic as the template script."""
    raw = _template_diag.build_report([r.to_dict() for r in records], taxonomy.to_dict())
    return DiagnosisReport.from_dict(raw)


def generate_script(
    generator: Generator | None,
    records_summary: Mapping[str, Any],
    prev_script: DiagScript | None,
    taxonomy: SymptomTaxonomy,
    seed: int,
    *,
    iteration: int,
) -> DiagScript:
    """Obtain this iteration's script, carrying the previous script as context.

    Falls back to the built-in template (after one retry) when the generator
    fails; the parent-hash chain is preserved either way.
    """
    parent_hash = prev_script.content_hash if prev_script is not None else None
    if generator is None:
        return template_script(iteration, parent_hash)

    request = canonical_json(
        {
            "kind": "diagnosis_script_request",
            "iteration": iteration,
            "records_summary": dict(records_summary),
            "known_labels": list(taxonomy.labels),
            "previous_script": prev_script.source if prev_script is not None else None,
            "protocol": "argv = [records_file, taxonomy_file, output_file]; "
            "write one JSON diagnosis report to output_file",
        }
    )
    for attempt in range(2):
        try:
            source = generator.generate(request, seed)
            if not source.strip():
                raise GeneratorError("generator returned an empty script")
            return DiagScript(
                iteration=iteration,
                source=source,
                language="python",
                parent_hash=parent_hash,
            )
        except GeneratorError as exc:
            logger.warning("diagnosis script generation attempt %d failed: %s", attempt + 1, exc)
    logger.error("diagnosis generator failed twice; falling back to the built-in template")
    return template_script(iteration, parent_hash)


@dataclass(frozen=True)
class SandboxLimits:
    timeout: float = DEFAULT_SCRIPT_TIMEOUT
    cpu_seconds: int | None = None

    def to_dict(self) -> dict[str, Any]:
        return {"timeout": self.timeout, "cpu_seconds": self.cpu_seconds}


def _scrubbed_env(sandbox: Path) -> dict[str, str]:
    # Minimal allowlist; secrets and generator config never reach the script.
    return {
        "PATH": os.environ.get("PATH", "/usr/bin:/bin"),
        "HOME": str(sandbox),
        "LANG": "C.UTF-8",
        "PYTHONHASHSEED": "0",
        "PYTHONPATH": str(sandbox),
        "NO_PROXY": "*",
    }


def execute_script(
    script: DiagScript,
    records_path: Path,
    taxonomy_path: Path,
    limits: SandboxLimits | None = None,
) -> DiagnosisReport:
    """Run one script in the sandbox and parse its report.

    Raises :class:`ScriptExecutionError` on nonzero exit, timeout, or an
    unreadable report; the caller decides whether to fall back to the
    template. Validation against the record store is the caller's step —
    this function only guarantees a well-formed report document.
    """
    limits = limits or SandboxLimits()
    records_path = Path(records_path)
    taxonomy_path = Path(taxonomy_path)
    if not records_path.exists():
        raise ScriptExecutionError(f"records file {records_path} does not exist")

    with tempfile.TemporaryDirectory(prefix="agentline-diag-") as tmp:
        sandbox = Path(tmp)
        # Scripts work on scratch copies, never the record store itself.
        records_copy = sandbox / "records.jsonl"
        taxonomy_copy = sandbox / "taxonomy.json"
        shutil.copyfile(records_path, records_copy)
        shutil.copyfile(taxonomy_path, taxonomy_copy)
        os.chmod(records_copy, 0o444)
        os.chmod(taxonomy_copy, 0o444)
        script_path = sandbox / script.file_name()
        script_path.write_text(script.source, encoding="utf-8")
        output_path = sandbox / "report.json"
        if script.language == "python":
            (sandbox / "sitecustomize.py").write_text(_SOCKET_GUARD, encoding="utf-8")

        argv = list(SCRIPT_RUNTIMES[script.language]) + [
            str(script_path),
            str(records_copy),
            str(taxonomy_copy),
            str(output_path),
        ]

        preexec = None
        if limits.cpu_seconds is not None and hasattr(os, "fork"):
            import resource

            cpu = limits.cpu_seconds

            def preexec() -> None:  # pragma: no cover - runs in the child
                resource.setrlimit(resource.RLIMIT_CPU, (cpu, cpu + 5))

        try:
            proc = subprocess.run(
                argv,
                cwd=sandbox,
                env=_scrubbed_env(sandbox),
                capture_output=True,
                text=True,
                timeout=limits.timeout,
                preexec_fn=preexec,
            )
        except subprocess.TimeoutExpired as exc:
            raise ScriptExecutionError(
                f"diagnosis script exceeded {limits.timeout}s"
            ) from exc
        if proc.returncode != 0:
            raise ScriptExecutionError(
                f"diagnosis script exited {proc.returncode}: {proc.stderr[:400]}"
            )
        if not output_path.exists():
            raise ScriptExecutionError("diagnosis script wrote no report")
        try:
            raw = json.loads(output_path.read_text(encoding="utf-8"))
            return DiagnosisReport.from_dict(raw)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ScriptExecutionError(f"diagnosis report unreadable: {exc}") from exc


def validate_report(
    report: DiagnosisReport,
    records: Sequence[QualityRecord],
    taxonomy: SymptomTaxonomy,
) -> list[str]:
    """Check every report invariant; returns violations instead of raising."""
    violations: list[str] = []
    known_ids = {r.example_id for r in records}
    failures = sum(1 for r in records if not r.final_pass)
    total = len(records)

    count_sum = 0
    for symptom in report.dominant_symptoms:
        if symptom.label not in taxonomy:
            violations.append(f"dominant_symptoms: unknown label {symptom.label!r}")
        if symptom.count < 0 or symptom.count > failures:
            violations.append(
                f"dominant_symptoms: count {symptom.count} for {symptom.label!r} "
                f"exceeds {failures} failures"
            )
        if not 0.0 <= symptom.share <= 1.0:
            violations.append(
                f"dominant_symptoms: share {symptom.share} for {symptom.label!r} outside [0, 1]"
            )
        count_sum += max(symptom.count, 0)
    if count_sum > failures:
        violations.append(
            f"dominant_symptoms: counts sum to {count_sum}, more than {failures} failures"
        )

    for pattern, ids in report.trigger_patterns:
        if not pattern:
            violations.append("trigger_patterns: empty pattern")
        for ex_id in ids:
            if ex_id not in known_ids:
                violations.append(f"trigger_patterns: unknown example {ex_id!r}")

    for ex_id, label, _excerpt in report.representative_examples:
        if ex_id not in known_ids:
            violations.append(f"representative_examples: unknown example {ex_id!r}")
        if label not in taxonomy:
            violations.append(f"representative_examples: unknown label {label!r}")

    by_label = {s.label: s.count for s in report.dominant_symptoms}
    for label, fraction in report.affected_surface.items():
        if label not in taxonomy:
            violations.append(f"affected_surface: unknown label {label!r}")
        if not 0.0 <= fraction <= 1.0:
            violations.append(f"affected_surface: fraction {fraction} for {label!r} outside [0, 1]")
        elif label in by_label and total > 0:
            expected = by_label[label] / total
            if abs(fraction - expected) > 1e-9:
                violations.append(
                    f"affected_surface: fraction {fraction} for {label!r} "
                    f"inconsistent with count/{total}"
                )
    return violations


def records_summary(records: Sequence[QualityRecord]) -> dict[str, Any]:
    """Compact digest handed to script generators (not the records themselves)."""
    label_counts: dict[str, int] = {}
    for record in records:
        if not record.final_pass and record.critic.symptom_label:
            label = record.critic.symptom_label
            label_counts[label] = label_counts.get(label, 0) + 1
    return {
        "n_records": len(records),
        "n_failures": sum(1 for r in records if not r.final_pass),
        "label_counts": dict(sorted(label_counts.items())),
    }


def counts_only_report(
    records: Sequence[QualityRecord], taxonomy: SymptomTaxonomy, iteration: int
) -> DiagnosisReport:
    """Degraded diagnosis for the no-script ablation: raw symptom counts only."""
    summary = records_summary(records)
    failures = summary["n_failures"]
    total = summary["n_records"]
    ordered = sorted(summary["label_counts"].items(), key=lambda item: (-item[1], item[0]))
    return DiagnosisReport(
        iteration=iteration,
        dominant_symptoms=tuple(
            SymptomCount(label=label, count=count, share=count / failures)
            for label, count in ordered
        ),
        trigger_patterns=(),
        representative_examples=(),
        affected_surface={label: count / total for label, count in ordered},
    )


__all__ = [
    "DEFAULT_SCRIPT_TIMEOUT",
    "DiagnosisError",
    "ScriptExecutionError",
    "DiagScript",
    "DiagnosisReport",
    "SymptomCount",
    "SandboxLimits",
    "template_script",
    "template_report",
    "generate_script",
    "execute_script",
    "validate_report",
    "records_summary",
    "counts_only_report",
]
