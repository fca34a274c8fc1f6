"""The single canonical version line: promotion, audit log, manifests, final report.

On-disk layout under the line root::

    line.json                  head, promoted versions, hash-chained event log
    objects/<sha256>           content-addressed artifact store
    versions/v<NNN>/           one directory per iteration
        blueprint/             promoted blueprint (accepted iterations only)
        records/               quality records (train.jsonl, rc_train.jsonl)
        taxonomy.json          symptom taxonomy snapshot
        diagnosis/             script + report
        rc/                    diff + intent + provenance
        gate/                  flips.json + decision.json
        manifest.json          artifact name -> {hash, path}
    final_report/              single-use test evaluation

Every log entry hashes its predecessor, and every artifact is stored both
in the readable tree and under its content hash, so tampering with any byte
breaks :meth:`VersionLine.verify`. Discarded RCs are retained forever;
rejected iterations are evidence, not garbage.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

from .canonical import canonical_json, sha256_hex
from .evaluate import evaluate_split
from .gate import GateDecision
from .generators import Generator
from .harness import AgentAdapter, Blueprint
from .records import (
    Dataset,
    QualityRecord,
    Rubric,
    SymptomTaxonomy,
    serialize_records,
)
from .rc import ReleaseCandidate
from .scoring import Scorer

logger = logging.getLogger(__name__)

LINE_FILE = "line.json"
OBJECTS_DIR = "objects"
VERSIONS_DIR = "versions"
FINAL_REPORT_DIR = "final_report"

EVENTS = (
    "initialized",
    "ran",
    "scored",
    "critiqued",
    "diagnosed",
    "rc_created",
    "converged",
    "gated",
    "promoted",
    "discarded",
    "stopped",
    "final_reported",
)


class LineError(RuntimeError):
    pass


class LineIntegrityError(LineError):
    """The audit chain or an artifact hash failed verification."""


def version_dir_name(iteration: int) -> str:
    return f"v{iteration:03d}"


def system_clock() -> Callable[[int], str]:
    from datetime import datetime, timezone

    def now(_seq: int) -> str:
        return datetime.now(timezone.utc).isoformat()

    return now


def logical_clock() -> Callable[[int], str]:
    """Deterministic clock for byte-reproducible runs: timestamps follow the
    event sequence instead of wall time."""

    def now(seq: int) -> str:
        return f"logical:{seq:06d}"

    return now


_CLOCKS = {"system": system_clock, "logical": logical_clock}


@dataclass(frozen=True)
class FinalReport:
    head_version: str
    n_test: int
    n_passed: int
    pass_rate: float
    records_hash: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "head_version": self.head_version,
            "n_test": self.n_test,
            "n_passed": self.n_passed,
            "pass_rate": self.pass_rate,
            "records_hash": self.records_hash,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FinalReport":
        return cls(
            head_version=data["head_version"],
            n_test=data["n_test"],
            n_passed=data["n_passed"],
            pass_rate=data["pass_rate"],
            records_hash=data["records_hash"],
        )


def _entry_hash(entry: Mapping[str, Any]) -> str:
    body = {k: v for k, v in entry.items() if k != "hash"}
    return sha256_hex(canonical_json(body))


class VersionLine:
    """Append-only line state. All mutations go through one process holding
    the pipeline's directory lock; readers see immutable artifacts."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self._state: dict[str, Any] = {}
        self._load()

    # -- creation / loading -------------------------------------------------

    @classmethod
    def init(
        cls, root: Path, initial_blueprint: Blueprint, *, clock: str = "system"
    ) -> "VersionLine":
        root = Path(root)
        if (root / LINE_FILE).exists():
            raise LineError(f"line already exists at {root}")
        root.mkdir(parents=True, exist_ok=True)
        (root / OBJECTS_DIR).mkdir(exist_ok=True)
        (root / VERSIONS_DIR).mkdir(exist_ok=True)
        if clock not in _CLOCKS:
            raise LineError(f"unknown clock {clock!r}")
        state = {
            "format": 1,
            "clock": clock,
            "head": None,
            "versions": [],
            "log": [],
        }
        (root / LINE_FILE).write_text(canonical_json(state), encoding="utf-8")
        line = cls(root)
        blueprint = Blueprint(
            version_id="v000",
            files=initial_blueprint.files,
            metadata=initial_blueprint.metadata,
            parent=None,
        )
        line._write_blueprint(0, blueprint)
        line._append_version(blueprint, iteration=0)
        line.log_event("initialized", 0, {"blueprint_hash": blueprint.content_hash()})
        return line

    @classmethod
    def open(cls, root: Path) -> "VersionLine":
        root = Path(root)
        if not (root / LINE_FILE).exists():
            raise LineError(f"no version line at {root}")
        return cls(root)

    def _load(self) -> None:
        path = self.root / LINE_FILE
        if path.exists():
            self._state = json.loads(path.read_text(encoding="utf-8"))

    def _save(self) -> None:
        path = self.root / LINE_FILE
        tmp = path.with_suffix(".tmp")
        tmp.write_text(canonical_json(self._state), encoding="utf-8")
        tmp.replace(path)

    # -- basic accessors ----------------------------------------------------

    @property
    def head_version_id(self) -> str:
        head = self._state.get("head")
        if head is None:
            raise LineError("line has no head version")
        return head

    @property
    def head_id_or_none(self) -> str | None:
        return self._state.get("head")

    @property
    def versions(self) -> list[dict[str, Any]]:
        return list(self._state["versions"])

    @property
    def log(self) -> list[dict[str, Any]]:
        return list(self._state["log"])

    def events(self) -> list[str]:
        return [entry["event"] for entry in self._state["log"]]

    def has_event(self, event: str) -> bool:
        return any(entry["event"] == event for entry in self._state["log"])

    def iteration_dir(self, iteration: int) -> Path:
        return self.root / VERSIONS_DIR / version_dir_name(iteration)

    # -- event log ----------------------------------------------------------

    def log_event(self, event: str, iteration: int, details: Mapping[str, Any]) -> dict[str, Any]:
        if event not in EVENTS:
            raise LineError(f"unknown event {event!r}")
        log = self._state["log"]
        # Each event occurs at most once per iteration, which makes phase
        # replays after a crash idempotent instead of duplicating history.
        for entry in log:
            if entry["event"] == event and entry["iteration"] == iteration:
                return entry
        seq = len(log)
        ts = _CLOCKS[self._state["clock"]]()(seq)
        entry = {
            "seq": seq,
            "event": event,
            "iteration": iteration,
            "details": dict(details),
            "ts": ts,
            "prev": log[-1]["hash"] if log else None,
        }
        entry["hash"] = _entry_hash(entry)
        log.append(entry)
        self._save()
        return entry

    # -- artifact store -----------------------------------------------------

    def store_bytes(self, data: bytes) -> str:
        digest = sha256_hex(data)
        target = self.root / OBJECTS_DIR / digest
        if not target.exists():
            tmp = target.with_suffix(".tmp")
            tmp.write_bytes(data)
            tmp.replace(target)
        return digest

    def read_object(self, digest: str) -> bytes:
        target = self.root / OBJECTS_DIR / digest
        if not target.exists():
            raise LineIntegrityError(f"object {digest} is missing from the store")
        return target.read_bytes()

    def write_iteration_file(self, iteration: int, rel_path: str, data: bytes | str) -> str:
        """Write an artifact into the readable tree and the object store."""
        if isinstance(data, str):
            data = data.encode("utf-8")
        digest = self.store_bytes(data)
        target = self.iteration_dir(iteration) / rel_path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)
        return digest

    def write_manifest(
        self,
        iteration: int,
        entries: Mapping[str, Mapping[str, str]],
        meta: Mapping[str, Any] | None = None,
    ) -> str:
        manifest = {
            "iteration": iteration,
            "artifacts": {name: dict(item) for name, item in sorted(entries.items())},
            **(dict(meta) if meta else {}),
        }
        return self.write_iteration_file(iteration, "manifest.json", canonical_json(manifest))

    # -- versions -----------------------------------------------------------

    def _write_blueprint(self, iteration: int, blueprint: Blueprint) -> str:
        doc = canonical_json(blueprint.to_dict())
        digest = self.write_iteration_file(iteration, "blueprint/blueprint.json", doc)
        for rel_path, content in sorted(blueprint.files.items()):
            self.write_iteration_file(iteration, f"blueprint/files/{rel_path}", content)
        return digest

    def _append_version(self, blueprint: Blueprint, iteration: int) -> None:
        self._state["versions"].append(
            {
                "version_id": blueprint.version_id,
                "blueprint_hash": blueprint.content_hash(),
                "parent": blueprint.parent,
                "iteration": iteration,
            }
        )
        self._state["head"] = blueprint.version_id
        self._save()

    def head_blueprint(self) -> Blueprint:
        head = self.head_version_id
        for version in self._state["versions"]:
            if version["version_id"] == head:
                path = (
                    self.iteration_dir(version["iteration"]) / "blueprint" / "blueprint.json"
                )
                return Blueprint.from_dict(json.loads(path.read_text(encoding="utf-8")))
        raise LineError(f"head version {head} not found")

    def find_rc(self, rc_id: str) -> ReleaseCandidate | None:
        """Any RC ever created — promoted or discarded — stays retrievable."""
        for path in sorted((self.root / VERSIONS_DIR).glob("*/rc/rc.json")):
            data = json.loads(path.read_text(encoding="utf-8"))
            if data["rc_id"] == rc_id:
                return ReleaseCandidate.from_dict(data)
        return None

    def promote(
        self,
        candidate: ReleaseCandidate,
        decision: GateDecision,
        rc_blueprint: Blueprint,
        *,
        iteration: int,
    ) -> bool:
        """Apply the gate outcome to the line; returns True when promoted.

        Accept: the RC's blueprint becomes the next version, relabeled from
        its rc id to the iteration's version id. Reject: the head does not
        move; the RC stays archived as discarded.
        """
        already_promoted = any(
            v["iteration"] == iteration and v["version_id"] == version_dir_name(iteration)
            for v in self._state["versions"]
        )
        if decision.accept and already_promoted:
            # Idempotent replay after a crash between promotion and checkpoint.
            self.log_event(
                "promoted",
                iteration,
                {
                    "rc_id": candidate.rc_id,
                    "version_id": version_dir_name(iteration),
                    "blueprint_hash": rc_blueprint.content_hash(),
                },
            )
            return True
        if candidate.base_version != self.head_version_id:
            raise LineError(
                f"rc {candidate.rc_id} is based on {candidate.base_version}, "
                f"but the head is {self.head_version_id}"
            )
        if decision.accept:
            promoted = Blueprint(
                version_id=version_dir_name(iteration),
                files=rc_blueprint.files,
                metadata=rc_blueprint.metadata,
                parent=self.head_version_id,
            )
            self._write_blueprint(iteration, promoted)
            self._append_version(promoted, iteration=iteration)
            self.log_event(
                "promoted",
                iteration,
                {
                    "rc_id": candidate.rc_id,
                    "version_id": promoted.version_id,
                    "blueprint_hash": promoted.content_hash(),
                },
            )
            return True
        self.log_event(
            "discarded",
            iteration,
            {"rc_id": candidate.rc_id, "base_version": candidate.base_version},
        )
        return False

    # -- verification ---------------------------------------------------------

    def verify(self) -> list[str]:
        """Walk the whole line; returns all integrity problems found."""
        problems: list[str] = []
        log = self._state["log"]
        prev_hash = None
        for index, entry in enumerate(log):
            if entry.get("seq") != index:
                problems.append(f"log[{index}]: sequence number {entry.get('seq')} != {index}")
            if entry.get("prev") != prev_hash:
                problems.append(f"log[{index}]: broken chain link")
            if _entry_hash(entry) != entry.get("hash"):
                problems.append(f"log[{index}]: entry hash mismatch")
            prev_hash = entry.get("hash")

        objects_dir = self.root / OBJECTS_DIR
        for obj in sorted(objects_dir.iterdir()) if objects_dir.exists() else []:
            if obj.suffix == ".tmp":
                continue
            if sha256_hex(obj.read_bytes()) != obj.name:
                problems.append(f"objects/{obj.name}: content does not match its name")

        for manifest_path in sorted((self.root / VERSIONS_DIR).glob("*/manifest.json")):
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            base = manifest_path.parent
            for name, meta in manifest.get("artifacts", {}).items():
                digest = meta["hash"]
                if not (objects_dir / digest).exists():
                    problems.append(f"{manifest_path.parent.name}/{name}: object {digest} missing")
                tree_file = base / meta["path"]
                if not tree_file.exists():
                    problems.append(f"{manifest_path.parent.name}/{name}: file {meta['path']} missing")
                elif sha256_hex(tree_file.read_bytes()) != digest:
                    problems.append(
                        f"{manifest_path.parent.name}/{name}: file {meta['path']} does not "
                        "match its manifest hash"
                    )
        return problems

    # -- final report ---------------------------------------------------------

    def final_report(
        self,
        dataset: Dataset,
        adapter: AgentAdapter,
        rubric: Rubric,
        scorer: Scorer | None,
        critic_generator: Generator,
        taxonomy: SymptomTaxonomy,
        *,
        seed: int = 0,
        parallelism: int = 1,
    ) -> FinalReport:
        """Run the head blueprint once on the held-out test split.

        Refused before a stop event and refused forever after the first
        call: the test set is consumed exactly once per line.
        """
        if not self.has_event("stopped"):
            raise LineError("final report is only available after the line has stopped")
        if self.has_event("final_reported"):
            raise LineError("test set already consumed: final report was produced before")

        head = self.head_blueprint()
        evaluation = evaluate_split(
            adapter,
            head,
            dataset,
            "test",
            rubric,
            scorer,
            critic_generator,
            taxonomy,
            seed=seed,
            iteration=-1,
            parallelism=parallelism,
            allow_test=True,
        )
        records = evaluation.records
        payload = serialize_records(records)
        records_hash = self.store_bytes(payload)
        report_dir = self.root / FINAL_REPORT_DIR
        report_dir.mkdir(exist_ok=True)
        (report_dir / "test.jsonl").write_bytes(payload)
        n_passed = sum(1 for r in records if r.final_pass)
        report = FinalReport(
            head_version=head.version_id,
            n_test=len(records),
            n_passed=n_passed,
            pass_rate=n_passed / len(records) if records else 0.0,
            records_hash=records_hash,
        )
        (report_dir / "report.json").write_text(
            canonical_json(report.to_dict()), encoding="utf-8"
        )
        self.log_event(
            "final_reported",
            self._state["versions"][-1]["iteration"],
            {"records_hash": records_hash, "pass_rate": report.pass_rate},
        )
        return report


def load_records_file(path: Path) -> list[QualityRecord]:
    from .records import parse_records

    return parse_records(Path(path).read_bytes())


def load_taxonomy_file(path: Path) -> SymptomTaxonomy:
    return SymptomTaxonomy.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


__all__ = [
    "EVENTS",
    "LINE_FILE",
    "FinalReport",
    "LineError",
    "LineIntegrityError",
    "VersionLine",
    "version_dir_name",
    "load_records_file",
    "load_taxonomy_file",
    "logical_clock",
    "system_clock",
]
