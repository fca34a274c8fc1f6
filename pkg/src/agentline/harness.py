"""Runs an agent built from a blueprint over a dataset, producing (output, trace) pairs.

Two adapter kinds are supported: in-process (simulators, tests) and
subprocess, where the agent is an external executable speaking a small wire
protocol: ``argv = [blueprint_dir, example_file]``, one JSON run document on
stdout (``{"output": ..., "trace": {...}}``), exit 0 meaning the trace is
valid even if the agent failed its task.

Adapter failures are data, not harness failures: crashes and timeouts are
converted into traces whose last step has kind ``error``.
"""

from __future__ import annotations

import json
import logging
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Protocol, runtime_checkable

from .canonical import canonical_json, content_hash, derive_seed
from .records import Dataset, Example, RecordError, Trace, TraceStep

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 120.0


class HarnessError(RuntimeError):
    pass


class UnknownAdapterError(HarnessError):
    pass


@dataclass(frozen=True)
class Blueprint:
    """Versioned agent artifact: a file map plus provenance metadata.

    The content hash covers the files only, so promoting an RC (which
    relabels the version) does not change the hash of what actually ships.
    """

    version_id: str
    files: Mapping[str, str]
    metadata: Mapping[str, Any] = field(default_factory=dict)
    parent: str | None = None

    def __post_init__(self) -> None:
        if not self.version_id:
            raise RecordError("blueprint version_id must be non-empty")
        if not self.files:
            raise RecordError("blueprint files map must be non-empty")
        object.__setattr__(self, "files", dict(self.files))
        object.__setattr__(self, "metadata", dict(self.metadata))

    def content_hash(self) -> str:
        return content_hash(dict(self.files))

    def to_dict(self) -> dict[str, Any]:
        return {
            "version_id": self.version_id,
            "files": dict(self.files),
            "metadata": dict(self.metadata),
            "parent": self.parent,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Blueprint":
        return cls(
            version_id=data["version_id"],
            files=dict(data["files"]),
            metadata=dict(data.get("metadata", {})),
            parent=data.get("parent"),
        )

    def materialize(self, directory: Path) -> Path:
        """Write the file map under ``directory`` (for subprocess adapters)."""
        directory.mkdir(parents=True, exist_ok=True)
        for rel_path, content in sorted(self.files.items()):
            target = directory / rel_path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(content, encoding="utf-8")
        return directory

    @classmethod
    def from_directory(cls, directory: Path, version_id: str = "v000") -> "Blueprint":
        files = {}
        root = Path(directory)
        for path in sorted(root.rglob("*")):
            if path.is_file():
                files[str(path.relative_to(root))] = path.read_text(encoding="utf-8")
        return cls(version_id=version_id, files=files)


@runtime_checkable
class AgentAdapter(Protocol):
    """Contract: (blueprint, example, seed) -> (output, trace), deterministic per seed.

    Adapters must never mutate the blueprint and must set
    ``trace.example_id = example.id``. ``single_flight = True`` tells the
    harness the adapter is not safe to invoke concurrently.
    """

    single_flight: bool

    def run(self, blueprint: Blueprint, example: Example, seed: int) -> tuple[str, Trace]: ...


def _error_trace(example_id: str, code: str, message: str) -> Trace:
    payload = code if not message else f"{code}: {message}"
    return Trace(
        example_id=example_id,
        steps=(TraceStep(index=0, kind="error", payload=payload),),
        final_output="",
    )


@dataclass
class EchoAdapter:
    """Returns the example input verbatim with a single final_output step."""

    single_flight: bool = False

    def run(self, blueprint: Blueprint, example: Example, seed: int) -> tuple[str, Trace]:
        output = example.input if isinstance(example.input, str) else canonical_json(example.input)
        trace = Trace(
            example_id=example.id,
            steps=(TraceStep(index=0, kind="final_output", payload=output),),
            final_output=output,
        )
        return output, trace


@dataclass
class ScriptedAdapter:
    """Fixture playback: a fixed map example id -> (output, trace)."""

    fixtures: Mapping[str, tuple[str, Trace]]
    single_flight: bool = False

    def run(self, blueprint: Blueprint, example: Example, seed: int) -> tuple[str, Trace]:
        if example.id not in self.fixtures:
            return "", _error_trace(example.id, "no_fixture", example.id)
        output, trace = self.fixtures[example.id]
        if trace.example_id != example.id:
            raise HarnessError(f"fixture trace id {trace.example_id!r} != {example.id!r}")
        return output, trace


@dataclass
class SubprocessAdapter:
    """Adapter over an external executable speaking the run-document protocol."""

    command: tuple[str, ...]
    timeout: float = DEFAULT_TIMEOUT
    single_flight: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.command, tuple):
            self.command = tuple(self.command)

    def run(self, blueprint: Blueprint, example: Example, seed: int) -> tuple[str, Trace]:
        with tempfile.TemporaryDirectory(prefix="agentline-run-") as tmp:
            tmp_path = Path(tmp)
            blueprint_dir = blueprint.materialize(tmp_path / "blueprint")
            example_file = tmp_path / "example.json"
            example_file.write_text(
                canonical_json({"id": example.id, "input": example.input, "seed": seed}),
                encoding="utf-8",
            )
            argv = list(self.command) + [str(blueprint_dir), str(example_file)]
            try:
                proc = subprocess.run(
                    argv, capture_output=True, text=True, timeout=self.timeout
                )
            except subprocess.TimeoutExpired:
                return "", _error_trace(example.id, "timeout", f"exceeded {self.timeout}s")
            except OSError as exc:
                return "", _error_trace(example.id, "adapter_crash", str(exc))
        if proc.returncode != 0:
            return "", _error_trace(
                example.id, "adapter_crash", f"exit {proc.returncode}: {proc.stderr[:200]}"
            )
        return parse_run_document(proc.stdout, example.id)


def parse_run_document(text: str, example_id: str) -> tuple[str, Trace]:
    """Parse an adapter's stdout document, degrading to an error trace on breach."""
    try:
        doc = json.loads(text)
        output = doc["output"]
        trace = Trace.from_dict(doc["trace"])
    except (json.JSONDecodeError, KeyError, TypeError, RecordError) as exc:
        return "", _error_trace(example_id, "invalid_trace", str(exc))
    if trace.example_id != example_id:
        return "", _error_trace(
            example_id, "invalid_trace", f"trace is for {trace.example_id!r}"
        )
    return output, trace


@dataclass(frozen=True)
class RunResult:
    output: str
    trace: Trace
    wall_time: float
    error: str | None = None


@dataclass
class RunSet:
    """All per-example results for one (blueprint, split) execution."""

    version_id: str
    iteration: int
    split: str
    results: dict[str, RunResult]

    def __len__(self) -> int:
        return len(self.results)

    def outputs(self) -> dict[str, str]:
        return {ex_id: r.output for ex_id, r in self.results.items()}


def run_agent(
    adapter: AgentAdapter, blueprint: Blueprint, example: Example, seed: int
) -> tuple[str, Trace]:
    """Run one example, converting adapter crashes into error traces."""
    try:
        output, trace = adapter.run(blueprint, example, seed)
    except Exception as exc:  # noqa: BLE001 - adapter failures are data
        logger.warning("adapter crashed on %s: %s", example.id, exc)
        return "", _error_trace(example.id, "adapter_crash", str(exc))
    if trace.example_id != example.id:
        return "", _error_trace(example.id, "invalid_trace", f"trace is for {trace.example_id!r}")
    return output, trace


def run_examples(
    adapter: AgentAdapter,
    blueprint: Blueprint,
    examples: list[Example],
    split: str,
    *,
    parallelism: int = 1,
    seed: int = 0,
    iteration: int = 0,
) -> RunSet:
    """Execute a concrete example list; results are keyed by id, so the
    outcome is independent of the parallelism degree.

    Per-example seeds derive from (seed, example_id), never from scheduling
    order.
    """
    before = blueprint.content_hash()

    def one(example: Example) -> tuple[str, RunResult]:
        example_seed = derive_seed(seed, example.id)
        started = time.monotonic()
        output, trace = run_agent(adapter, blueprint, example, example_seed)
        elapsed = time.monotonic() - started
        error = None
        last = trace.last_step
        if last is not None and last.kind == "error":
            error = last.payload.split(":", 1)[0].strip()
        return example.id, RunResult(output=output, trace=trace, wall_time=elapsed, error=error)

    results: dict[str, RunResult] = {}
    if parallelism <= 1 or getattr(adapter, "single_flight", False):
        for example in examples:
            ex_id, result = one(example)
            results[ex_id] = result
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            for ex_id, result in pool.map(one, examples):
                results[ex_id] = result

    after = blueprint.content_hash()
    if before != after:
        raise HarnessError("adapter mutated the blueprint during the run")
    return RunSet(version_id=blueprint.version_id, iteration=iteration, split=split, results=results)


def run_dataset(
    adapter: AgentAdapter,
    blueprint: Blueprint,
    dataset: Dataset,
    split: str,
    *,
    parallelism: int = 1,
    seed: int = 0,
    iteration: int = 0,
    allow_test: bool = False,
) -> RunSet:
    """Run a whole dataset split. ``split="test"`` is refused unless the
    caller is the final-report path (``allow_test=True``); the underlying
    dataset read is counted for the hygiene audit.
    """
    examples = dataset.examples(split, allow_test=allow_test)
    return run_examples(
        adapter,
        blueprint,
        examples,
        split,
        parallelism=parallelism,
        seed=seed,
        iteration=iteration,
    )


__all__ = [
    "DEFAULT_TIMEOUT",
    "HarnessError",
    "UnknownAdapterError",
    "Blueprint",
    "AgentAdapter",
    "EchoAdapter",
    "ScriptedAdapter",
    "SubprocessAdapter",
    "RunResult",
    "RunSet",
    "run_agent",
    "run_examples",
    "run_dataset",
    "parse_run_document",
]
