"""End-to-end orchestration: run, score, critique, diagnose, synthesize, gate, promote.

One pipeline process owns a line directory (file lock). Within an iteration
the phases are sequential; each phase writes its artifacts before the state
file advances, and completed phases are skipped on re-entry, so a run
interrupted at any checkpoint and resumed with the same config produces a
line byte-identical to an uninterrupted one (deterministic components, the
logical clock).

Iteration 0 is baseline-establishing: it runs and records the initial
blueprint but synthesizes no candidate. Each later iteration produces
exactly one release candidate, evaluates it on the full train split, and
promotes or discards it under the flip gate.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from filelock import FileLock

from . import __version__
from .canonical import canonical_json, content_hash, derive_seed, sha256_hex
from .critic import RuleBasedCritic
from .diagnosis import (
    DiagnosisReport,
    DiagScript,
    SandboxLimits,
    ScriptExecutionError,
    counts_only_report,
    execute_script,
    generate_script,
    records_summary,
    template_script,
    validate_report,
)
from .evaluate import evaluate_split
from .flips import FlipReport, PassVector, build_flip_report
from .gate import (
    GateConfig,
    GateDecision,
    HistoryEntry,
    RuleOutcome,
    StopConfig,
    decide,
    should_stop,
)
from .generators import Generator, HttpGenerator, RecordingGenerator, ReplayGenerator
from .harness import (
    AgentAdapter,
    Blueprint,
    EchoAdapter,
    SubprocessAdapter,
    UnknownAdapterError,
)
from .line import FinalReport, VersionLine, version_dir_name
from .rc import RcSynthesisError, ReleaseCandidate, apply_diff, synthesize_rc
from .records import (
    Dataset,
    QualityRecord,
    Rubric,
    SymptomTaxonomy,
    merge_taxonomy,
    parse_records,
    serialize_records,
)
from .scoring import (
    ExactMatchScorer,
    RegexScorer,
    SchemaScorer,
    Scorer,
    SubprocessTestScorer,
)
from .simulator import SimulatedTask, build_task

logger = logging.getLogger(__name__)

# Checkpointed phases per iteration; "critic" covers the run/score/critic
# group for the current version, "gate" includes the RC evaluation.
PHASES = ("critic", "diagnose", "synthesize", "gate", "done")

STATE_FILE = "state.json"
CONFIG_FILE = "config.json"


class ConfigError(ValueError):
    pass


class PhaseFailure(RuntimeError):
    def __init__(self, iteration: int, phase: str, cause: BaseException):
        super().__init__(f"iteration {iteration} failed in phase {phase!r}: {cause}")
        self.iteration = iteration
        self.phase = phase
        self.cause = cause


class PipelineAbort(RuntimeError):
    """Raised by phase hooks to simulate an interrupted process in tests."""


@dataclass(frozen=True)
class PipelineConfig:
    """JSON-serializable run configuration; its hash pins resumability."""

    task: Mapping[str, Any] | None = None
    dataset_path: str | None = None
    rubric: Mapping[str, Any] | None = None
    adapter: Mapping[str, Any] | None = None
    scorer: Mapping[str, Any] | None = None
    critic: Mapping[str, Any] = field(default_factory=lambda: {"kind": "rule"})
    diagnosis: Mapping[str, Any] = field(default_factory=lambda: {"kind": "template"})
    rc: Mapping[str, Any] | None = None
    gate: GateConfig = field(default_factory=GateConfig)
    stop: StopConfig = field(default_factory=StopConfig)
    disable_gate: bool = False
    disable_executable_diagnosis: bool = False
    # Unsafe: exists only to reproduce the non-blind critic experiment.
    critic_sees_blueprint: bool = False
    seed: int = 0
    parallelism: int = 1
    revalidate: bool = False
    script_timeout: float = 300.0
    clock: str = "logical"

    def to_dict(self) -> dict[str, Any]:
        return {
            "task": dict(self.task) if self.task else None,
            "dataset_path": self.dataset_path,
            "rubric": dict(self.rubric) if self.rubric else None,
            "adapter": dict(self.adapter) if self.adapter else None,
            "scorer": dict(self.scorer) if self.scorer else None,
            "critic": dict(self.critic),
            "diagnosis": dict(self.diagnosis),
            "rc": dict(self.rc) if self.rc else None,
            "gate": self.gate.to_dict(),
            "stop": self.stop.to_dict(),
            "disable_gate": self.disable_gate,
            "disable_executable_diagnosis": self.disable_executable_diagnosis,
            "critic_sees_blueprint": self.critic_sees_blueprint,
            "seed": self.seed,
            "parallelism": self.parallelism,
            "revalidate": self.revalidate,
            "script_timeout": self.script_timeout,
            "clock": self.clock,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        known = dict(data)
        gate = GateConfig.from_dict(known.pop("gate", {}) or {})
        stop = StopConfig.from_dict(known.pop("stop", {}) or {})
        fields_ = {
            k: known[k]
            for k in cls.__dataclass_fields__
            if k in known and k not in ("gate", "stop")
        }
        return cls(gate=gate, stop=stop, **fields_)

    def config_hash(self) -> str:
        return content_hash(self.to_dict())


@dataclass
class PipelineComponents:
    """Concrete collaborators resolved from (or injected alongside) a config."""

    adapter: AgentAdapter
    dataset: Dataset
    rubric: Rubric
    scorer: Scorer | None
    critic_generator: Generator
    diagnosis_generator: Generator | None  # None -> built-in template script
    rc_generator: Generator
    initial_blueprint: Blueprint


def _resolve_generator(spec: Mapping[str, Any], default_kind: str) -> Generator | None:
    kind = spec.get("kind", default_kind)
    if kind == "rule":
        return RuleBasedCritic()
    if kind == "template":
        return None
    if kind == "replay":
        return ReplayGenerator(store=Path(spec["store"]))
    if kind == "live":
        generator: Generator = HttpGenerator(url=spec.get("url"))
        if spec.get("record_store"):
            generator = RecordingGenerator(generator, Path(spec["record_store"]))
        return generator
    raise ConfigError(f"unknown generator kind {kind!r}")


def _resolve_scorer(spec: Mapping[str, Any] | None) -> Scorer | None:
    if spec is None or spec.get("kind") in (None, "none"):
        return None
    kind = spec["kind"]
    if kind == "exact":
        answers = spec.get("answers")
        if answers is None and spec.get("answers_path"):
            answers = json.loads(Path(spec["answers_path"]).read_text(encoding="utf-8"))
        return ExactMatchScorer(answers=answers or {})
    if kind == "schema":
        return SchemaScorer(required=spec.get("required", {}))
    if kind == "regex":
        return RegexScorer(pattern=spec["pattern"])
    if kind == "subprocess":
        return SubprocessTestScorer(
            command=tuple(spec["command"]),
            timeout=spec.get("timeout", 60.0),
            expected_exit=spec.get("expected_exit", 0),
        )
    raise ConfigError(f"unknown scorer kind {kind!r}")


def resolve_components(
    config: PipelineConfig, initial_blueprint: Blueprint | None = None
) -> PipelineComponents:
    """Build concrete collaborators from a declarative config."""
    task: SimulatedTask | None = None
    if config.task is not None:
        params = dict(config.task)
        if params.pop("kind", "simulated") != "simulated":
            raise ConfigError("only the 'simulated' task kind is built in")
        task = build_task(**params)

    if task is not None:
        dataset = task.dataset
        rubric = task.rubric
        adapter: AgentAdapter = task.adapter()
        scorer = (
            _resolve_scorer(config.scorer)
            if config.scorer is not None
            else ExactMatchScorer(answers=task.answers)
        )
        if config.rc is not None and config.rc.get("kind") not in (None, "simulated"):
            rc_generator = _resolve_generator(config.rc, "replay")
        else:
            rc_generator = task.rc_generator()
        blueprint = initial_blueprint or task.initial_blueprint
    else:
        if config.dataset_path is None or config.rubric is None:
            raise ConfigError("a dataset_path and rubric are required without a task")
        dataset = Dataset.from_jsonl(config.dataset_path)
        rubric = Rubric.from_dict(config.rubric)
        adapter_spec = config.adapter or {}
        adapter_kind = adapter_spec.get("kind")
        if adapter_kind == "echo":
            adapter = EchoAdapter()
        elif adapter_kind == "subprocess":
            adapter = SubprocessAdapter(
                command=tuple(adapter_spec["command"]),
                timeout=adapter_spec.get("timeout", 120.0),
            )
        else:
            raise UnknownAdapterError(f"unknown adapter kind {adapter_kind!r}")
        scorer = _resolve_scorer(config.scorer)
        if config.rc is None:
            raise ConfigError("an rc generator spec is required without a task")
        rc_generator = _resolve_generator(config.rc, "replay")
        if initial_blueprint is None:
            raise ConfigError("an initial blueprint is required without a task")
        blueprint = initial_blueprint

    critic_generator = _resolve_generator(config.critic, "rule")
    if critic_generator is None:
        raise ConfigError("the critic generator cannot be 'template'")
    if rc_generator is None:
        raise ConfigError("the rc generator cannot be 'template'")
    diagnosis_generator = _resolve_generator(config.diagnosis, "template")
    return PipelineComponents(
        adapter=adapter,
        dataset=dataset,
        rubric=rubric,
        scorer=scorer,
        critic_generator=critic_generator,
        diagnosis_generator=diagnosis_generator,
        rc_generator=rc_generator,
        initial_blueprint=blueprint,
    )


@dataclass
class PipelineResult:
    line: VersionLine
    iterations_run: int
    stop_conditions: tuple[str, ...]
    converged: bool
    final_report: FinalReport | None = None

    @property
    def stopped(self) -> bool:
        return self.line.has_event("stopped")

    @property
    def stopped_by_rejections(self) -> bool:
        return "consecutive_rejections" in self.stop_conditions


# ---------------------------------------------------------------------------
# Internal runner
# ---------------------------------------------------------------------------

_ATTEMPT_PY = re.compile(r"^diagnosis/attempt_(\d+)\.py$")
_ATTEMPT_META = re.compile(r"^diagnosis/attempt_(\d+)\.json$")

_FIXED_MANIFEST_NAMES = {
    "records/train.jsonl": "records",
    "records/rc_train.jsonl": "rc_records",
    "taxonomy.json": "taxonomy",
    "diagnosis/script.py": "diag_script",
    "diagnosis/script.json": "diag_script_meta",
    "diagnosis/report.json": "diagnosis_report",
    "rc/rc.json": "rc",
    "rc/converged.json": "rc",
    "rc/rc_failed.json": "rc",
    "rc/intent.json": "intent",
    "gate/flips.json": "flip_report",
    "gate/decision.json": "gate_decision",
    "blueprint/blueprint.json": "blueprint",
}


def _manifest_name(rel_path: str) -> str | None:
    """Manifest entry name for an artifact path, None for unmanifested files."""
    if rel_path in _FIXED_MANIFEST_NAMES:
        return _FIXED_MANIFEST_NAMES[rel_path]
    match = _ATTEMPT_PY.match(rel_path)
    if match:
        return f"diag_attempt_{match.group(1)}"
    match = _ATTEMPT_META.match(rel_path)
    if match:
        return f"diag_attempt_{match.group(1)}_meta"
    return None


@dataclass
class _Context:
    taxonomy: SymptomTaxonomy
    baseline_vector: PassVector | None
    current_records: list[QualityRecord]
    current_vector: PassVector | None
    prev_script: DiagScript | None
    history: list[HistoryEntry]
    # transient, per-iteration
    diagnosis: DiagnosisReport | None = None
    candidate: ReleaseCandidate | None = None
    rc_blueprint: Blueprint | None = None
    rc_records: list[QualityRecord] | None = None
    flip_report: FlipReport | None = None
    decision: GateDecision | None = None
    converged: bool = False
    rc_failed: bool = False
    manifest: dict[str, dict[str, str]] = field(default_factory=dict)


def _read_state(line_dir: Path) -> dict[str, Any]:
    path = line_dir / STATE_FILE
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def _write_state(line_dir: Path, state: Mapping[str, Any]) -> None:
    path = line_dir / STATE_FILE
    tmp = path.with_suffix(".tmp")
    tmp.write_text(canonical_json(dict(state)), encoding="utf-8")
    tmp.replace(path)


def _phase_done(state: Mapping[str, Any], iteration: int, phase: str) -> bool:
    done_iter = state.get("iteration", -1)
    if done_iter > iteration:
        return True
    if done_iter < iteration:
        return False
    done_phase = state.get("phase", "")
    if done_phase == "done":
        return True
    if phase == "done":
        return False
    try:
        return PHASES.index(done_phase) >= PHASES.index(phase)
    except ValueError:
        return False


class _Runner:
    def __init__(
        self,
        line_dir: Path,
        config: PipelineConfig,
        components: PipelineComponents,
        on_phase: Callable[[int, str], None] | None = None,
    ):
        self.line_dir = Path(line_dir)
        self.config = config
        self.components = components
        self.on_phase = on_phase
        self.state = _read_state(self.line_dir)
        self.line = VersionLine.open(self.line_dir)
        self.ctx = self._rebuild_context()
        self._stop_conditions: tuple[str, ...] = ()

    # -- context reconstruction ------------------------------------------------

    def _records_path(self, iteration: int, name: str) -> Path:
        return self.line.iteration_dir(iteration) / "records" / name

    def _read_records(self, iteration: int, name: str) -> list[QualityRecord]:
        return parse_records(self._records_path(iteration, name).read_bytes())

    def _rebuild_context(self) -> _Context:
        taxonomy = SymptomTaxonomy()
        baseline_vector = None
        current_records: list[QualityRecord] = []
        current_vector = None
        prev_script = None
        history: list[HistoryEntry] = []

        versions_root = self.line_dir / "versions"
        iterations = sorted(
            int(p.name[1:]) for p in versions_root.glob("v*") if p.name[1:].isdigit()
        )
        for t in iterations:
            tax_path = self.line.iteration_dir(t) / "taxonomy.json"
            if tax_path.exists():
                taxonomy = SymptomTaxonomy.from_dict(
                    json.loads(tax_path.read_text(encoding="utf-8"))
                )
            script_path = self.line.iteration_dir(t) / "diagnosis" / "script.json"
            if script_path.exists():
                prev_script = DiagScript.from_dict(
                    json.loads(script_path.read_text(encoding="utf-8"))
                )
            flips_path = self.line.iteration_dir(t) / "gate" / "flips.json"
            decision_path = self.line.iteration_dir(t) / "gate" / "decision.json"
            if flips_path.exists() and decision_path.exists():
                history.append(
                    HistoryEntry(
                        iteration=t,
                        flip_report=FlipReport.from_dict(
                            json.loads(flips_path.read_text(encoding="utf-8"))
                        ),
                        decision=GateDecision.from_dict(
                            json.loads(decision_path.read_text(encoding="utf-8"))
                        ),
                    )
                )

        baseline_path = self._records_path(0, "train.jsonl")
        if baseline_path.exists():
            baseline_records = self._read_records(0, "train.jsonl")
            baseline_vector = PassVector.from_records("v000", baseline_records)
            current_records = baseline_records
            current_vector = baseline_vector

        # The head's records are those of the iteration that promoted it.
        head_id = self.line.head_id_or_none
        head_meta = next(
            (v for v in self.line.versions if v["version_id"] == head_id), None
        )
        if head_meta is not None and head_meta["iteration"] > 0:
            head_iter = head_meta["iteration"]
            rc_records_path = self._records_path(head_iter, "rc_train.jsonl")
            if rc_records_path.exists():
                current_records = self._read_records(head_iter, "rc_train.jsonl")
                current_vector = PassVector.from_records(
                    version_dir_name(head_iter), current_records
                )
        return _Context(
            taxonomy=taxonomy,
            baseline_vector=baseline_vector,
            current_records=current_records,
            current_vector=current_vector,
            prev_script=prev_script,
            history=history,
        )

    def _reload_transients(self, t: int) -> None:
        """Rebuild the per-iteration context for phases already on disk."""
        it_dir = self.line.iteration_dir(t)
        self.ctx.manifest = {}
        if it_dir.exists():
            for path in sorted(it_dir.rglob("*")):
                if not path.is_file():
                    continue
                rel_path = str(path.relative_to(it_dir))
                name = _manifest_name(rel_path)
                if name is not None:
                    self.ctx.manifest[name] = {
                        "hash": sha256_hex(path.read_bytes()),
                        "path": rel_path,
                    }
        report_path = it_dir / "diagnosis" / "report.json"
        if report_path.exists():
            self.ctx.diagnosis = DiagnosisReport.from_dict(
                json.loads(report_path.read_text(encoding="utf-8"))
            )
        if (it_dir / "rc" / "converged.json").exists():
            self.ctx.converged = True
        if (it_dir / "rc" / "rc_failed.json").exists():
            self.ctx.rc_failed = True
        rc_path = it_dir / "rc" / "rc.json"
        if rc_path.exists():
            self.ctx.candidate = ReleaseCandidate.from_dict(
                json.loads(rc_path.read_text(encoding="utf-8"))
            )
            self.ctx.rc_blueprint = apply_diff(
                self.line.head_blueprint(), self.ctx.candidate.diff, rc_id=self.ctx.candidate.rc_id
            )
        rc_records_path = self._records_path(t, "rc_train.jsonl")
        if rc_records_path.exists():
            self.ctx.rc_records = self._read_records(t, "rc_train.jsonl")
        flips_path = it_dir / "gate" / "flips.json"
        if flips_path.exists():
            self.ctx.flip_report = FlipReport.from_dict(
                json.loads(flips_path.read_text(encoding="utf-8"))
            )
        decision_path = it_dir / "gate" / "decision.json"
        if decision_path.exists():
            self.ctx.decision = GateDecision.from_dict(
                json.loads(decision_path.read_text(encoding="utf-8"))
            )

    # -- helpers -----------------------------------------------------------------

    def _checkpoint(self, iteration: int, phase: str) -> None:
        _write_state(
            self.line_dir,
            {
                "config_hash": self.config.config_hash(),
                "iteration": iteration,
                "phase": phase,
            },
        )
        if self.on_phase is not None:
            self.on_phase(iteration, phase)

    def _store(self, iteration: int, name: str, rel_path: str, data: bytes | str) -> None:
        digest = self.line.write_iteration_file(iteration, rel_path, data)
        self.ctx.manifest[name] = {"hash": digest, "path": rel_path}

    def _manifest_meta(self) -> dict[str, Any]:
        return {
            "engine_version": __version__,
            "config_hash": self.config.config_hash(),
            "timestamps": {"clock": self.config.clock},
        }

    def _evaluate(
        self, blueprint: Blueprint, iteration: int, *, tag: str
    ) -> tuple[list[QualityRecord], PassVector, tuple[str, ...]]:
        evaluation = evaluate_split(
            self.components.adapter,
            blueprint,
            self.components.dataset,
            "train",
            self.components.rubric,
            self.components.scorer,
            self.components.critic_generator,
            self.ctx.taxonomy,
            seed=derive_seed(self.config.seed, "eval", tag),
            iteration=iteration,
            parallelism=self.config.parallelism,
            unsafe_blueprint_context=self.config.critic_sees_blueprint,
        )
        vector = PassVector.from_records(tag, evaluation.records)
        return evaluation.records, vector, evaluation.new_labels

    # -- iteration 0: baseline -----------------------------------------------------

    def run_baseline(self) -> None:
        if _phase_done(self.state, 0, "done"):
            return
        if self.config.critic_sees_blueprint:
            logger.warning(
                "UNSAFE: critic_sees_blueprint is enabled; the critic is no longer "
                "implementation-blind (ablation arm only)"
            )
        head = self.line.head_blueprint()
        records, vector, new_labels = self._evaluate(head, 0, tag="v000")
        self.ctx.taxonomy = merge_taxonomy(self.ctx.taxonomy, new_labels, 0)
        self.ctx.current_records = records
        self.ctx.current_vector = vector
        self.ctx.baseline_vector = vector
        self.ctx.manifest = {}
        self._store(0, "records", "records/train.jsonl", serialize_records(records))
        self._store(0, "taxonomy", "taxonomy.json", canonical_json(self.ctx.taxonomy.to_dict()))
        self.line.log_event("ran", 0, {"version": "v000", "examples": len(records)})
        self.line.log_event(
            "scored", 0, {"scorer": "configured" if self.components.scorer else None}
        )
        self.line.log_event("critiqued", 0, {"new_labels": list(new_labels)})
        self.line.write_manifest(0, self.ctx.manifest, meta=self._manifest_meta())
        self._checkpoint(0, "done")
        self.state = _read_state(self.line_dir)

    # -- iteration t >= 1 phases -----------------------------------------------------

    def _phase_run_score_critic(self, t: int) -> None:
        revalidated = False
        if self.config.revalidate:
            head = self.line.head_blueprint()
            records, vector, new_labels = self._evaluate(head, t, tag=head.version_id)
            self.ctx.taxonomy = merge_taxonomy(self.ctx.taxonomy, new_labels, t)
            self.ctx.current_records = records
            self.ctx.current_vector = vector
            revalidated = True
        assert self.ctx.current_vector is not None
        self._store(
            t, "records", "records/train.jsonl", serialize_records(self.ctx.current_records)
        )
        self.line.log_event(
            "ran", t, {"reused": not revalidated, "version": self.ctx.current_vector.tag}
        )
        self.line.log_event("scored", t, {"reused": not revalidated})
        self.line.log_event("critiqued", t, {"reused": not revalidated})

    def _phase_diagnose(self, t: int) -> None:
        if self.config.disable_executable_diagnosis:
            report = counts_only_report(self.ctx.current_records, self.ctx.taxonomy, t)
            self.ctx.diagnosis = report
            self._store(
                t, "diagnosis_report", "diagnosis/report.json", canonical_json(report.to_dict())
            )
            self.line.log_event(
                "diagnosed", t, {"executable": False, "report_hash": report.content_hash}
            )
            return

        script = generate_script(
            self.components.diagnosis_generator,
            records_summary(self.ctx.current_records),
            self.ctx.prev_script,
            self.ctx.taxonomy,
            derive_seed(self.config.seed, "diag", t),
            iteration=t,
        )
        report, executed = self._run_script_with_fallback(script, t)
        self.ctx.diagnosis = report
        self.ctx.prev_script = executed
        self._store(
            t, "diagnosis_report", "diagnosis/report.json", canonical_json(report.to_dict())
        )
        self.line.log_event(
            "diagnosed",
            t,
            {
                "executable": True,
                "script_hash": executed.content_hash,
                "report_hash": report.content_hash,
            },
        )

    def _run_script_with_fallback(
        self, script: DiagScript, t: int
    ) -> tuple[DiagnosisReport, DiagScript]:
        records_path = self._records_path(t, "train.jsonl")
        taxonomy_path = self.line.iteration_dir(t) / "taxonomy.diag.json"
        taxonomy_path.parent.mkdir(parents=True, exist_ok=True)
        taxonomy_path.write_text(canonical_json(self.ctx.taxonomy.to_dict()), encoding="utf-8")
        limits = SandboxLimits(timeout=self.config.script_timeout)

        candidates = [script]
        template = template_script(t, script.parent_hash)
        if script.source != template.source:
            candidates.append(template)
        last_error: Exception | None = None
        for index, candidate in enumerate(candidates):
            # Audit-before-run: source and hash hit disk before any execution.
            self._store(
                t,
                f"diag_attempt_{index}" if index + 1 < len(candidates) else "diag_script",
                f"diagnosis/attempt_{index}.py" if index + 1 < len(candidates) else "diagnosis/script.py",
                candidate.source,
            )
            self._store(
                t,
                f"diag_attempt_{index}_meta" if index + 1 < len(candidates) else "diag_script_meta",
                f"diagnosis/attempt_{index}.json" if index + 1 < len(candidates) else "diagnosis/script.json",
                canonical_json(candidate.to_dict()),
            )
            try:
                report = execute_script(candidate, records_path, taxonomy_path, limits)
            except ScriptExecutionError as exc:
                logger.warning("diagnosis script %s failed: %s", candidate.content_hash[:12], exc)
                last_error = exc
                continue
            violations = validate_report(report, self.ctx.current_records, self.ctx.taxonomy)
            if violations:
                logger.warning("diagnosis report invalid: %s", violations[:3])
                last_error = ScriptExecutionError(f"invalid report: {violations[:3]}")
                continue
            if index + 1 < len(candidates):
                # A fallback never ran; promote the executed script to the
                # canonical name so the chain carries what actually produced
                # the report.
                self._store(t, "diag_script", "diagnosis/script.py", candidate.source)
                self._store(
                    t, "diag_script_meta", "diagnosis/script.json", canonical_json(candidate.to_dict())
                )
            return report, candidate
        raise ScriptExecutionError(f"all diagnosis scripts failed: {last_error}")

    def _phase_synthesize(self, t: int) -> None:
        assert self.ctx.diagnosis is not None
        if self.ctx.diagnosis.is_clean:
            self.ctx.converged = True
            self._store(t, "rc", "rc/converged.json", canonical_json({"converged": True}))
            self.line.log_event("converged", t, {"failures": 0})
            return
        rc_id = f"rc-{t:03d}"
        head = self.line.head_blueprint()
        try:
            candidate = synthesize_rc(
                self.components.rc_generator,
                head,
                self.ctx.diagnosis,
                self.ctx.taxonomy,
                derive_seed(self.config.seed, "rc", t),
                rc_id=rc_id,
            )
        except RcSynthesisError as exc:
            self.ctx.candidate = None
            self.ctx.rc_failed = True
            self._store(
                t, "rc", "rc/rc_failed.json", canonical_json({"rc_id": rc_id, "error": str(exc)})
            )
            self.line.log_event("rc_created", t, {"rc_id": rc_id, "rc_failed": True})
            return
        if candidate is None:
            self.ctx.converged = True
            self._store(t, "rc", "rc/converged.json", canonical_json({"converged": True}))
            self.line.log_event("converged", t, {"failures": 0})
            return
        self.ctx.candidate = candidate
        self.ctx.rc_blueprint = apply_diff(head, candidate.diff, rc_id=rc_id)
        self._store(t, "rc", "rc/rc.json", canonical_json(candidate.to_dict()))
        self._store(t, "intent", "rc/intent.json", canonical_json(candidate.intent.to_dict()))
        self.line.log_event(
            "rc_created",
            t,
            {
                "rc_id": rc_id,
                "targets": list(candidate.intent.target_symptoms),
                "diff_hash": candidate.diff.content_hash,
            },
        )

    def _rc_failed_evidence(self, t: int) -> tuple[FlipReport, GateDecision]:
        """A failed synthesis is gated as an automatic rejection with empty
        flip evidence, so it counts toward the consecutive-rejection stop."""
        assert self.ctx.current_vector is not None
        vector = self.ctx.current_vector
        base = build_flip_report(
            vector,
            PassVector(tag=f"rc-{t:03d}", passes=vector.passes),
            self.ctx.baseline_vector or vector,
        )
        report = FlipReport.from_dict({**base.to_dict(), "rc_failed": True})
        decision = GateDecision(
            accept=False,
            reasons=(
                RuleOutcome(
                    rule="rc_failed",
                    passed=False,
                    observed="no applicable release candidate",
                    threshold=None,
                ),
            ),
        )
        return report, decision

    def _phase_gate(self, t: int) -> None:
        if self.ctx.converged:
            return
        gate_config = self.config.gate
        if self.config.disable_gate and gate_config.enabled:
            gate_config = GateConfig.from_dict({**gate_config.to_dict(), "enabled": False})
        if self.ctx.candidate is None:  # rc_failed path
            report, decision = self._rc_failed_evidence(t)
        else:
            assert self.ctx.rc_blueprint is not None
            records, vector, new_labels = self._evaluate(
                self.ctx.rc_blueprint, t, tag=self.ctx.candidate.rc_id
            )
            self.ctx.rc_records = records
            self.ctx.taxonomy = merge_taxonomy(self.ctx.taxonomy, new_labels, t)
            self._store(t, "rc_records", "records/rc_train.jsonl", serialize_records(records))
            assert self.ctx.current_vector is not None
            prev_map = {r.example_id: r for r in self.ctx.current_records}
            report = build_flip_report(
                self.ctx.current_vector,
                vector,
                self.ctx.baseline_vector or self.ctx.current_vector,
                prev_map,
                set(self.ctx.candidate.intent.target_symptoms),
            )
            decision = decide(
                report,
                self.ctx.candidate.intent.target_symptoms,
                gate_config,
                flip_report_hash=content_hash(report.to_dict()),
            )
        self.ctx.flip_report = report
        self.ctx.decision = decision
        self._store(t, "taxonomy", "taxonomy.json", canonical_json(self.ctx.taxonomy.to_dict()))
        self._store(t, "flip_report", "gate/flips.json", canonical_json(report.to_dict()))
        self._store(t, "gate_decision", "gate/decision.json", canonical_json(decision.to_dict()))
        self.line.log_event(
            "gated",
            t,
            {
                "accept": decision.accept,
                "f2p": len(report.f2p_ids),
                "p2f": len(report.p2f_ids),
                "gate_enabled": gate_config.enabled,
            },
        )

    def _phase_promote(self, t: int) -> bool:
        """Apply the decision, close out the iteration; True means stop."""
        if self.ctx.converged:
            self.line.write_manifest(t, self.ctx.manifest, meta=self._manifest_meta())
            self.line.log_event("stopped", t, {"conditions": ["converged"]})
            self._stop_conditions = ("converged",)
            return True
        assert self.ctx.flip_report is not None and self.ctx.decision is not None
        if self.ctx.candidate is not None:
            assert self.ctx.rc_blueprint is not None
            promoted = self.line.promote(
                self.ctx.candidate, self.ctx.decision, self.ctx.rc_blueprint, iteration=t
            )
            if promoted:
                blueprint_doc = self.line.iteration_dir(t) / "blueprint" / "blueprint.json"
                self.ctx.manifest["blueprint"] = {
                    "hash": sha256_hex(blueprint_doc.read_bytes()),
                    "path": "blueprint/blueprint.json",
                }
                self.ctx.current_records = self.ctx.rc_records or self.ctx.current_records
                self.ctx.current_vector = PassVector.from_records(
                    version_dir_name(t), self.ctx.current_records
                )
        else:
            self.line.log_event("discarded", t, {"rc_id": f"rc-{t:03d}", "rc_failed": True})
        self.line.write_manifest(t, self.ctx.manifest, meta=self._manifest_meta())
        self.ctx.history.append(
            HistoryEntry(iteration=t, flip_report=self.ctx.flip_report, decision=self.ctx.decision)
        )
        stop = should_stop(self.ctx.history, self.config.stop)
        if stop.stop:
            self.line.log_event(
                "stopped", t, {"conditions": list(stop.conditions), "details": stop.details}
            )
            self._stop_conditions = stop.conditions
            return True
        return False

    # -- main loop ---------------------------------------------------------------

    def _stored_stop_conditions(self) -> tuple[str, ...]:
        for entry in self.line.log:
            if entry["event"] == "stopped":
                return tuple(entry["details"].get("conditions", ()))
        return ()

    def run(self, max_iterations: int) -> PipelineResult:
        self.run_baseline()
        iterations_run = 0
        stopped = self.line.has_event("stopped")
        if stopped:
            self._stop_conditions = self._stored_stop_conditions()
        t = self.state.get("iteration", 0)
        if self.state.get("phase") == "done":
            t += 1
        current_phase = "critic"
        while not stopped and t <= max_iterations:
            self.ctx.diagnosis = None
            self.ctx.candidate = None
            self.ctx.rc_blueprint = None
            self.ctx.rc_records = None
            self.ctx.flip_report = None
            self.ctx.decision = None
            self.ctx.converged = False
            self.ctx.rc_failed = False
            self.ctx.manifest = {}

            resuming = self.state.get("iteration", -1) == t
            if resuming:
                self._reload_transients(t)

            phase_plan: list[tuple[str, Callable[[int], None]]] = [
                ("critic", self._phase_run_score_critic),
                ("diagnose", self._phase_diagnose),
                ("synthesize", self._phase_synthesize),
                ("gate", self._phase_gate),
            ]
            try:
                for phase, step in phase_plan:
                    current_phase = phase
                    if resuming and _phase_done(self.state, t, phase):
                        continue
                    step(t)
                    self._checkpoint(t, phase)
                current_phase = "promote"
                stopped = self._phase_promote(t)
                self._checkpoint(t, "done")
            except PipelineAbort:
                raise
            except Exception as exc:
                raise PhaseFailure(t, current_phase, exc) from exc
            iterations_run += 1
            t += 1
        converged = self.line.has_event("converged")
        return PipelineResult(
            line=self.line,
            iterations_run=iterations_run,
            stop_conditions=self._stop_conditions,
            converged=converged,
        )


def run_pipeline(
    config: PipelineConfig,
    initial_blueprint: Blueprint | None = None,
    max_iterations: int = 10,
    *,
    line_dir: Path,
    components: PipelineComponents | None = None,
    run_final_report: bool = False,
    on_phase: Callable[[int, str], None] | None = None,
) -> PipelineResult:
    """Execute the full loop into ``line_dir`` (created if missing).

    With ``run_final_report`` the held-out test split is consumed once after
    stopping and the report attached to the result.
    """
    line_dir = Path(line_dir)
    line_dir.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(line_dir / ".lock"))
    with lock:
        components = components or resolve_components(config, initial_blueprint)
        if not (line_dir / "line.json").exists():
            VersionLine.init(line_dir, components.initial_blueprint, clock=config.clock)
            (line_dir / CONFIG_FILE).write_text(
                canonical_json(config.to_dict()), encoding="utf-8"
            )
        else:
            _check_config_drift(line_dir, config)
        runner = _Runner(line_dir, config, components, on_phase)
        result = runner.run(max_iterations)
        if run_final_report and result.line.has_event("stopped"):
            result.final_report = result.line.final_report(
                components.dataset,
                components.adapter,
                components.rubric,
                components.scorer,
                components.critic_generator,
                runner.ctx.taxonomy,
                seed=derive_seed(config.seed, "final"),
                parallelism=config.parallelism,
            )
        return result


def _check_config_drift(line_dir: Path, config: PipelineConfig) -> None:
    state = _read_state(line_dir)
    if state and state.get("config_hash") != config.config_hash():
        raise ConfigError(
            "config drift: the line was checkpointed under a different configuration"
        )


def resume(
    line_dir: Path,
    *,
    max_iterations: int = 10,
    components: PipelineComponents | None = None,
    run_final_report: bool = False,
    on_phase: Callable[[int, str], None] | None = None,
) -> PipelineResult:
    """Re-enter an interrupted run using the line's stored configuration."""
    line_dir = Path(line_dir)
    config_path = line_dir / CONFIG_FILE
    if not config_path.exists():
        raise ConfigError(f"no stored config at {config_path}")
    config = PipelineConfig.from_dict(json.loads(config_path.read_text(encoding="utf-8")))
    return run_pipeline(
        config,
        max_iterations=max_iterations,
        line_dir=line_dir,
        components=components,
        run_final_report=run_final_report,
        on_phase=on_phase,
    )


__all__ = [
    "PHASES",
    "ConfigError",
    "PhaseFailure",
    "PipelineAbort",
    "PipelineConfig",
    "PipelineComponents",
    "PipelineResult",
    "resolve_components",
    "run_pipeline",
    "resume",
]
