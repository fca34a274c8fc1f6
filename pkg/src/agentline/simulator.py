"""Seedable synthetic agents and generators for desk-scale gate-dynamics studies.

Two layers share one latent world model:

* a closed-form trajectory engine (``simulate_step`` / ``simulate_trajectory``)
  that drives the real flip ledger, gate, and stopping predicate over synthetic
  pass vectors — fast enough for 100-seed ablation ensembles; and
* a blueprint-driven task (``SimulatedTask``) whose adapter derives behavior
  from the blueprint's strategy file, so the full pipeline (harness, scorers,
  rule-based critic, template diagnosis, RC synthesis) can run end to end with
  no external model.

Fix draws are sticky per (trajectory, target): retrying the same target
redraws nothing, which is what makes returns diminish and stopping fire.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .canonical import canonical_json, derive_seed
from .diagnosis import DiagnosisReport, counts_only_report, template_report, template_script
from .flips import FlipReport, PassVector, build_flip_report
from .gate import GateConfig, GateDecision, HistoryEntry, StopConfig, decide, should_stop
from .harness import Blueprint
from .rc import ChangeIntent, file_hash
from .records import (
    CriticVerdict,
    Dataset,
    Example,
    QualityRecord,
    Rubric,
    RubricCheck,
    SymptomTaxonomy,
    Trace,
    TraceStep,
    merge_taxonomy,
)

DEFAULT_SYMPTOM_POOL: tuple[tuple[str, int, float], ...] = (
    # (label, relative class weight, fix probability under a targeting RC)
    ("missing_required_step", 6, 0.78),
    ("invalid_tool_arguments", 5, 0.74),
    ("tool_error", 4, 0.7),
    ("wrong_action_order", 3, 0.66),
    ("empty_output", 2, 0.62),
    ("incorrect_output", 2, 0.58),
)


def _uniform(*parts: object) -> float:
    return random.Random(derive_seed(*parts)).random()


@dataclass(frozen=True)
class SyntheticAgentModel:
    """Concrete latent world: who fails, with what symptom, and how hard fixes are.

    ``mislabel_rate`` corrupts the *recorded* symptom labels (the synthetic
    critic's output), standing in for a degraded, non-blind critic. Changes
    grounded in misdiagnosed symptoms are riskier, so the regression draw is
    scaled by ``1 + mistarget_regression_boost * off_target_share`` where
    off_target_share is the fraction of the targeted recorded mass whose true
    symptom differs.
    """

    example_ids: tuple[str, ...]
    initially_failing: frozenset[str]
    symptom_of: Mapping[str, str]
    difficulty: Mapping[str, float]
    fix_probability: Mapping[str, float]
    regression_probability: float = 0.004
    risky_rc_period: int = 0  # every k-th candidate carries high regression risk
    risky_regression_probability: float = 0.15
    mislabel_rate: float = 0.0
    mistarget_regression_boost: float = 15.0
    no_diagnosis_fix_penalty: float = 0.6
    improvement_decay: float = 1.0
    difficulty_weight: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "symptom_of", dict(self.symptom_of))
        object.__setattr__(self, "difficulty", dict(self.difficulty))
        object.__setattr__(self, "fix_probability", dict(self.fix_probability))
        for name in (
            "regression_probability",
            "risky_regression_probability",
            "mislabel_rate",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        for label, prob in self.fix_probability.items():
            if not 0.0 <= prob <= 1.0:
                raise ValueError(f"fix probability for {label!r} outside [0, 1]")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.fix_probability)

    def baseline_vector(self, tag: str = "v000") -> PassVector:
        return PassVector(
            tag=tag,
            passes={ex: ex not in self.initially_failing for ex in self.example_ids},
        )


def build_model(
    *,
    n_examples: int = 200,
    fail_fraction: float = 0.4,
    symptom_pool: Sequence[tuple[str, int, float]] = DEFAULT_SYMPTOM_POOL,
    seed: int = 0,
    **overrides: Any,
) -> SyntheticAgentModel:
    """Assign latent outcomes, symptoms, and difficulties from one seed."""
    rng = random.Random(derive_seed(seed, "model"))
    ids = tuple(f"e{i:04d}" for i in range(n_examples))
    n_fail = round(n_examples * fail_fraction)
    failing = frozenset(rng.sample(ids, n_fail))
    labels = [label for label, _w, _p in symptom_pool]
    weights = [w for _l, w, _p in symptom_pool]
    symptom_of = {ex: rng.choices(labels, weights=weights, k=1)[0] for ex in ids}
    difficulty = {ex: rng.random() for ex in ids}
    fix_probability = {label: p for label, _w, p in symptom_pool}
    return SyntheticAgentModel(
        example_ids=ids,
        initially_failing=failing,
        symptom_of=symptom_of,
        difficulty=difficulty,
        fix_probability=fix_probability,
        **overrides,
    )


def _recorded_label(model: SyntheticAgentModel, example_id: str, seed: int) -> str:
    """True symptom, possibly corrupted by the synthetic critic's label noise."""
    true_label = model.symptom_of[example_id]
    if model.mislabel_rate <= 0.0:
        return true_label
    if _uniform(seed, "mislabel", example_id) >= model.mislabel_rate:
        return true_label
    others = [label for label in model.labels if label != true_label]
    if not others:
        return true_label
    pick = random.Random(derive_seed(seed, "mislabel_pick", example_id)).randrange(len(others))
    return others[pick]


def _synthetic_record(
    example_id: str, passing: bool, label: str, iteration: int
) -> QualityRecord:
    if passing:
        trace = Trace(
            example_id=example_id,
            steps=(TraceStep(index=0, kind="final_output", payload="ok"),),
            final_output="ok",
        )
        verdict = CriticVerdict(pass_judgment=True, symptom_label="", description="ok")
        output = "ok"
    else:
        trace = Trace(
            example_id=example_id,
            steps=(TraceStep(index=0, kind="error", payload=f"{label}: synthetic failure"),),
            final_output="",
        )
        verdict = CriticVerdict(
            pass_judgment=False, symptom_label=label, description="synthetic failure"
        )
        output = ""
    return QualityRecord(
        example_id=example_id,
        output=output,
        trace=trace,
        grade=None,
        critic=verdict,
        final_pass=passing,
        iteration=iteration,
    )


def synthesize_records(
    model: SyntheticAgentModel,
    vector: PassVector,
    seed: int,
    iteration: int,
) -> list[QualityRecord]:
    """Records consistent with a pass vector: failing examples carry their
    (possibly mislabeled) symptom; passing examples are clean."""
    records = []
    for example_id in model.example_ids:
        passing = vector.passes[example_id]
        label = "" if passing else _recorded_label(model, example_id, seed)
        records.append(_synthetic_record(example_id, passing, label, iteration))
    return records


def _off_target_share(
    prev_records: Sequence[QualityRecord] | None,
    model: SyntheticAgentModel,
    targets: set[str],
) -> float:
    if not prev_records:
        return 0.0
    targeted = [
        r
        for r in prev_records
        if not r.final_pass and r.critic.symptom_label in targets
    ]
    if not targeted:
        return 0.0
    off = sum(1 for r in targeted if model.symptom_of[r.example_id] not in targets)
    return off / len(targeted)


def simulate_step(
    model: SyntheticAgentModel,
    pass_vector: PassVector,
    intent: ChangeIntent,
    seed: int,
    *,
    prev_records: Sequence[QualityRecord] | None = None,
    iteration: int = 0,
    cand_tag: str | None = None,
    regression_seed: int | None = None,
) -> tuple[PassVector, list[QualityRecord]]:
    """Advance one candidate evaluation.

    Each failing example whose true symptom is targeted flips to pass with
    its symptom's fix probability (scaled down by latent difficulty); each
    passing example regresses with the model's regression probability,
    boosted when the intent chases mislabeled symptoms.

    Fix draws key off ``seed`` (sticky per target: retrying the same target
    redraws nothing); regression draws key off ``regression_seed`` when
    given, because every candidate is a distinct change with fresh risk.
    """
    targets = set(intent.target_symptoms)
    regression = model.regression_probability * (
        1.0 + model.mistarget_regression_boost * _off_target_share(prev_records, model, targets)
    )
    regression = min(regression, 1.0)
    reg_seed = seed if regression_seed is None else regression_seed

    passes: dict[str, bool] = {}
    for example_id in model.example_ids:
        if pass_vector.passes[example_id]:
            passes[example_id] = _uniform(reg_seed, "reg", example_id) >= regression
        else:
            symptom = model.symptom_of[example_id]
            if symptom in targets:
                p_fix = model.fix_probability.get(symptom, 0.0) * (
                    1.0 - model.difficulty_weight * model.difficulty[example_id]
                )
                passes[example_id] = _uniform(seed, "fix", example_id) < p_fix
            else:
                passes[example_id] = False
    new_vector = PassVector(tag=cand_tag or f"cand-{iteration:03d}", passes=passes)
    records = synthesize_records(model, new_vector, seed, iteration)
    return new_vector, records


@dataclass(frozen=True)
class TrajectoryRow:
    iteration: int
    targets: tuple[str, ...]
    flip_report: FlipReport
    decision: GateDecision
    pass_count: int
    bad_release: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "iteration": self.iteration,
            "targets": list(self.targets),
            "flip_report": self.flip_report.to_dict(),
            "decision": self.decision.to_dict(),
            "pass_count": self.pass_count,
            "bad_release": self.bad_release,
        }


@dataclass(frozen=True)
class TrajectoryResult:
    rows: tuple[TrajectoryRow, ...]
    baseline_pass_count: int
    final_pass_count: int
    final_ftp: float
    final_p2p: float
    bad_release_count: int
    stop_conditions: tuple[str, ...]
    converged: bool

    @property
    def promotions(self) -> int:
        return sum(1 for row in self.rows if row.decision.accept)

    @property
    def rejections(self) -> int:
        return sum(1 for row in self.rows if not row.decision.accept)

    def promoted_total_f2p(self) -> int:
        return sum(len(r.flip_report.f2p_ids) for r in self.rows if r.decision.accept)

    def promoted_total_p2f(self) -> int:
        return sum(len(r.flip_report.p2f_ids) for r in self.rows if r.decision.accept)

    def promoted_p2f_rate(self) -> float:
        regressions = self.promoted_total_p2f()
        exposure = sum(r.flip_report.prev_pass_count for r in self.rows if r.decision.accept)
        return regressions / exposure if exposure else 0.0

    def evaluated_p2f_rate(self) -> float:
        regressions = sum(len(r.flip_report.p2f_ids) for r in self.rows)
        exposure = sum(r.flip_report.prev_pass_count for r in self.rows)
        return regressions / exposure if exposure else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "rows": [row.to_dict() for row in self.rows],
            "baseline_pass_count": self.baseline_pass_count,
            "final_pass_count": self.final_pass_count,
            "final_ftp": self.final_ftp,
            "final_p2p": self.final_p2p,
            "bad_release_count": self.bad_release_count,
            "promotions": self.promotions,
            "rejections": self.rejections,
            "promoted_total_f2p": self.promoted_total_f2p(),
            "promoted_total_p2f": self.promoted_total_p2f(),
            "promoted_p2f_rate": self.promoted_p2f_rate(),
            "evaluated_p2f_rate": self.evaluated_p2f_rate(),
            "stop_conditions": list(self.stop_conditions),
            "converged": self.converged,
        }


def _pick_target(diagnosis: DiagnosisReport, handled: set[str]) -> str | None:
    for label in diagnosis.dominant_labels():
        if label not in handled:
            return label
    labels = diagnosis.dominant_labels()
    return labels[0] if labels else None


def simulate_trajectory(
    model: SyntheticAgentModel,
    gate_config: GateConfig,
    stop_config: StopConfig,
    seed: int,
    iterations: int,
    *,
    disable_diagnosis: bool = False,
    bad_release_threshold: int = 10,
    line_dir: Path | None = None,
) -> TrajectoryResult:
    """Run the pipeline loop over the synthetic world with the real flip
    ledger, gate, and stopping predicate.

    When ``line_dir`` is given, version-line artifacts (records, taxonomy,
    diagnosis, rc package, flip report, gate decision, manifests) are
    written exactly as in a real run; without it the trajectory stays in
    memory, which is what makes 100-seed ensembles cheap.
    """
    from . import line as line_mod

    baseline = model.baseline_vector()
    records = synthesize_records(model, baseline, derive_seed(seed, "step", "baseline"), 0)
    taxonomy = merge_taxonomy(
        SymptomTaxonomy(),
        sorted({r.critic.symptom_label for r in records if r.critic.symptom_label}),
        0,
    )

    line = None
    if line_dir is not None:
        blueprint = Blueprint(
            version_id="v000",
            files={"strategy.json": canonical_json({"handled": [], "risk": "base"})},
        )
        line = line_mod.VersionLine.init(Path(line_dir), blueprint, clock="logical")
        _write_sim_iteration(line, 0, records, taxonomy, None, None, None, None)
        line.log_event("ran", 0, {"synthetic": True})
        line.log_event("scored", 0, {"scorer": None})
        line.log_event("critiqued", 0, {"labels": len(taxonomy.labels)})

    current = baseline
    current_records = records
    handled: set[str] = set()
    history: list[HistoryEntry] = []
    rows: list[TrajectoryRow] = []
    stop_conditions: tuple[str, ...] = ()
    converged = False

    for t in range(1, iterations + 1):
        if disable_diagnosis:
            diagnosis = counts_only_report(current_records, taxonomy, t)
        else:
            diagnosis = template_report(current_records, taxonomy)
        if line is not None:
            line.log_event("ran", t, {"reused": True})
            line.log_event("scored", t, {"reused": True})
            line.log_event("critiqued", t, {"reused": True})
            line.log_event("diagnosed", t, {"diagnosis_hash": diagnosis.content_hash})
        if diagnosis.is_clean:
            converged = True
            if line is not None:
                line.log_event("converged", t, {})
            break
        target = _pick_target(diagnosis, handled)
        if target is None:
            converged = True
            if line is not None:
                line.log_event("converged", t, {})
            break

        intent = ChangeIntent(
            target_symptoms=(target,),
            rationale=f"address dominant symptom {target}",
        )
        risky = model.risky_rc_period > 0 and t % model.risky_rc_period == 0
        effective = model
        if risky:
            effective = replace(model, regression_probability=model.risky_regression_probability)
        if disable_diagnosis:
            effective = replace(
                effective,
                fix_probability={
                    label: p * model.no_diagnosis_fix_penalty
                    for label, p in effective.fix_probability.items()
                },
            )
        if model.improvement_decay != 1.0:
            decay = model.improvement_decay ** (t - 1)
            effective = replace(
                effective,
                fix_probability={
                    label: p * decay for label, p in effective.fix_probability.items()
                },
            )

        step_seed = derive_seed(seed, "step", target)
        cand_tag = f"rc-{t:03d}"
        cand_vector, cand_records = simulate_step(
            effective,
            current,
            intent,
            step_seed,
            prev_records=current_records,
            iteration=t,
            cand_tag=cand_tag,
            regression_seed=derive_seed(seed, "reg-step", t),
        )
        prev_map = {r.example_id: r for r in current_records}
        report = build_flip_report(
            current, cand_vector, baseline, prev_map, set(intent.target_symptoms)
        )
        decision = decide(report, intent.target_symptoms, gate_config)
        accepted = decision.accept
        bad = accepted and len(report.p2f_ids) > bad_release_threshold

        taxonomy = merge_taxonomy(
            taxonomy,
            sorted({r.critic.symptom_label for r in cand_records if r.critic.symptom_label}),
            t,
        )
        if line is not None:
            _write_sim_iteration(
                line, t, cand_records, taxonomy, diagnosis, intent, report, decision
            )
            line.log_event("rc_created", t, {"rc_id": cand_tag, "targets": [target]})
            line.log_event("gated", t, {"accept": accepted})
            line.log_event(
                "promoted" if accepted else "discarded",
                t,
                {"rc_id": cand_tag},
            )

        if accepted:
            current = PassVector(tag=f"v{t:03d}", passes=cand_vector.passes)
            current_records = cand_records
            handled.add(target)

        rows.append(
            TrajectoryRow(
                iteration=t,
                targets=tuple(intent.target_symptoms),
                flip_report=report,
                decision=decision,
                pass_count=len(current.pass_ids),
                bad_release=bad,
            )
        )
        history.append(HistoryEntry(iteration=t, flip_report=report, decision=decision))
        stop = should_stop(history, stop_config)
        if stop.stop:
            stop_conditions = stop.conditions
            if line is not None:
                line.log_event("stopped", t, {"conditions": list(stop.conditions)})
            break

    if converged and line is not None and not line.has_event("stopped"):
        line.log_event("stopped", len(rows) + 1, {"conditions": ["converged"]})

    from .flips import cumulative_stats

    ftp, p2p = cumulative_stats(baseline, current)
    return TrajectoryResult(
        rows=tuple(rows),
        baseline_pass_count=len(baseline.pass_ids),
        final_pass_count=len(current.pass_ids),
        final_ftp=ftp,
        final_p2p=p2p,
        bad_release_count=sum(1 for row in rows if row.bad_release),
        stop_conditions=stop_conditions if stop_conditions else (("converged",) if converged else ()),
        converged=converged,
    )


def _write_sim_iteration(
    line: Any,
    iteration: int,
    records: Sequence[QualityRecord],
    taxonomy: SymptomTaxonomy,
    diagnosis: DiagnosisReport | None,
    intent: ChangeIntent | None,
    report: FlipReport | None,
    decision: GateDecision | None,
) -> None:
    from .records import serialize_records

    entries: dict[str, dict[str, str]] = {}
    name = "records/train.jsonl" if iteration == 0 else "records/rc_train.jsonl"
    entries["records"] = {
        "hash": line.write_iteration_file(iteration, name, serialize_records(list(records))),
        "path": name,
    }
    entries["taxonomy"] = {
        "hash": line.write_iteration_file(
            iteration, "taxonomy.json", canonical_json(taxonomy.to_dict())
        ),
        "path": "taxonomy.json",
    }
    if diagnosis is not None:
        script = template_script(iteration)
        entries["diag_script"] = {
            "hash": line.write_iteration_file(iteration, "diagnosis/script.py", script.source),
            "path": "diagnosis/script.py",
        }
        entries["diagnosis_report"] = {
            "hash": line.write_iteration_file(
                iteration, "diagnosis/report.json", canonical_json(diagnosis.to_dict())
            ),
            "path": "diagnosis/report.json",
        }
    if intent is not None:
        entries["intent"] = {
            "hash": line.write_iteration_file(
                iteration, "rc/intent.json", canonical_json(intent.to_dict())
            ),
            "path": "rc/intent.json",
        }
    if report is not None:
        entries["flip_report"] = {
            "hash": line.write_iteration_file(
                iteration, "gate/flips.json", canonical_json(report.to_dict())
            ),
            "path": "gate/flips.json",
        }
    if decision is not None:
        entries["gate_decision"] = {
            "hash": line.write_iteration_file(
                iteration, "gate/decision.json", canonical_json(decision.to_dict())
            ),
            "path": "gate/decision.json",
        }
    line.write_manifest(iteration, entries)


# ---------------------------------------------------------------------------
# Blueprint-driven synthetic task for full end-to-end pipeline runs.
# ---------------------------------------------------------------------------

STRATEGY_FILE = "strategy.json"

_SYMPTOM_TRACES = (
    "missing_required_step",
    "wrong_action_order",
    "invalid_tool_arguments",
    "tool_error",
    "empty_output",
)


def _parse_strategy(blueprint: Blueprint) -> dict[str, Any]:
    try:
        return json.loads(blueprint.files.get(STRATEGY_FILE, "{}"))
    except json.JSONDecodeError:
        return {}


@dataclass
class SimulatedAdapter:
    """In-process adapter whose behavior is a pure function of
    (blueprint contents, example, world seed).

    The blueprint's strategy file lists which symptom classes the agent
    handles and the change-risk level of the last applied change; handled
    failing examples pass according to their sticky fix draw, and passing
    examples regress according to the strategy's risk level, re-drawn per
    blueprint content hash.
    """

    model: SyntheticAgentModel
    world_seed: int
    single_flight: bool = False

    def run(self, blueprint: Blueprint, example: Example, seed: int) -> tuple[str, Trace]:
        strategy = _parse_strategy(blueprint)
        handled = set(strategy.get("handled", ()))
        risk_level = strategy.get("risk", "base")
        answer = f"answer-{example.id}"

        if example.id in self.model.initially_failing:
            symptom = self.model.symptom_of[example.id]
            fixed = (
                symptom in handled
                and _uniform(self.world_seed, "fix", example.id)
                < self.model.fix_probability.get(symptom, 0.0)
            )
            if not fixed:
                return self._failing_trace(example.id, symptom)
            return self._passing_trace(example.id, answer)

        if handled:
            risk = (
                self.model.risky_regression_probability
                if risk_level == "high"
                else self.model.regression_probability
            )
            if _uniform(self.world_seed, "reg", example.id, blueprint.content_hash()) < risk:
                return self._failing_trace(example.id, "tool_error")
        return self._passing_trace(example.id, answer)

    @staticmethod
    def _passing_trace(example_id: str, answer: str) -> tuple[str, Trace]:
        steps = (
            TraceStep(index=0, kind="tool_call", payload='{"q": "task"}', tool_name="search"),
            TraceStep(index=1, kind="tool_call", payload='{"value": "final"}', tool_name="submit"),
            TraceStep(index=2, kind="final_output", payload=answer),
        )
        return answer, Trace(example_id=example_id, steps=steps, final_output=answer)

    @staticmethod
    def _failing_trace(example_id: str, symptom: str) -> tuple[str, Trace]:
        if symptom == "missing_required_step":
            steps = (
                TraceStep(index=0, kind="tool_call", payload='{"value": "x"}', tool_name="submit"),
                TraceStep(index=1, kind="final_output", payload="answer-wrong"),
            )
            return "answer-wrong", Trace(example_id=example_id, steps=steps, final_output="answer-wrong")
        if symptom == "wrong_action_order":
            steps = (
                TraceStep(index=0, kind="tool_call", payload='{"value": "x"}', tool_name="submit"),
                TraceStep(index=1, kind="tool_call", payload='{"q": "task"}', tool_name="search"),
                TraceStep(index=2, kind="final_output", payload="answer-wrong"),
            )
            return "answer-wrong", Trace(example_id=example_id, steps=steps, final_output="answer-wrong")
        if symptom == "invalid_tool_arguments":
            steps = (
                TraceStep(index=0, kind="tool_call", payload='{"q": "task"}', tool_name="search"),
                TraceStep(index=1, kind="tool_call", payload="oops not json", tool_name="submit"),
                TraceStep(index=2, kind="final_output", payload="answer-wrong"),
            )
            return "answer-wrong", Trace(example_id=example_id, steps=steps, final_output="answer-wrong")
        if symptom == "empty_output":
            steps = (
                TraceStep(index=0, kind="tool_call", payload='{"q": "task"}', tool_name="search"),
                TraceStep(index=1, kind="tool_call", payload='{"value": ""}', tool_name="submit"),
            )
            return "", Trace(example_id=example_id, steps=steps, final_output="")
        # tool_error and anything unmapped: an execution error ends the trace.
        steps = (
            TraceStep(index=0, kind="tool_call", payload='{"q": "task"}', tool_name="search"),
            TraceStep(index=1, kind="error", payload="tool_error: upstream call failed"),
        )
        return "", Trace(example_id=example_id, steps=steps, final_output="")


class SimulatedRcGenerator:
    """Deterministic, stateless RC generator: patch the strategy file to
    handle the dominant unhandled symptom named by the diagnosis report.

    The risky-change schedule is keyed to the candidate's iteration ordinal
    (parsed from its rc id), so an interrupted pipeline resumes to the same
    candidates."""

    def __init__(self, risky_rc_period: int = 0):
        self.risky_rc_period = risky_rc_period

    def generate(self, request: str, seed: int) -> str:
        doc = json.loads(request)
        if doc.get("kind") != "rc_request":
            raise ValueError(f"unexpected request kind {doc.get('kind')!r}")
        blueprint_files = doc["blueprint"]["files"]
        strategy_text = blueprint_files.get(STRATEGY_FILE, '{"handled": [], "risk": "base"}')
        strategy = json.loads(strategy_text)
        handled = list(strategy.get("handled", ()))
        dominant = [s["label"] for s in doc["diagnosis"]["dominant_symptoms"]]
        target = next((label for label in dominant if label not in handled), None)
        if target is None:
            target = dominant[0]

        ordinal = int(doc.get("rc_id", "rc-000").rsplit("-", 1)[-1])
        risky = self.risky_rc_period > 0 and ordinal % self.risky_rc_period == 0
        new_strategy = canonical_json(
            {
                "handled": handled + ([target] if target not in handled else []),
                "risk": "high" if risky else "base",
            }
        )
        response = {
            "base_version": doc["blueprint"]["version_id"],
            "operations": [
                {
                    "op": "modify",
                    "path": STRATEGY_FILE,
                    "old_hash": file_hash(strategy_text),
                    "content": new_strategy,
                }
            ],
            "intent": {
                "target_symptoms": [target],
                "rationale": f"handle dominant symptom {target}",
            },
        }
        return canonical_json(response)


@dataclass(frozen=True)
class SimulatedTask:
    """Everything a full pipeline run needs: dataset, rubric, answer table,
    initial blueprint, and the world model behind the adapter."""

    model: SyntheticAgentModel
    world_seed: int
    dataset: Dataset
    rubric: Rubric
    answers: dict[str, str]
    initial_blueprint: Blueprint

    def adapter(self) -> SimulatedAdapter:
        return SimulatedAdapter(model=self.model, world_seed=self.world_seed)

    def rc_generator(self, risky_rc_period: int | None = None) -> SimulatedRcGenerator:
        period = self.model.risky_rc_period if risky_rc_period is None else risky_rc_period
        return SimulatedRcGenerator(risky_rc_period=period)


def build_task(
    *,
    n_train: int = 50,
    n_test: int = 0,
    fail_fraction: float = 0.6,
    seed: int = 0,
    symptom_pool: Sequence[tuple[str, int, float]] | None = None,
    **model_overrides: Any,
) -> SimulatedTask:
    pool = tuple(symptom_pool) if symptom_pool is not None else tuple(
        (label, weight, prob)
        for label, weight, prob in DEFAULT_SYMPTOM_POOL
        if label in _SYMPTOM_TRACES
    )
    model = build_model(
        n_examples=n_train + n_test,
        fail_fraction=fail_fraction,
        symptom_pool=pool,
        seed=seed,
        **model_overrides,
    )
    examples = [
        Example(id=ex_id, input=f"task {ex_id}", split="train" if i < n_train else "test")
        for i, ex_id in enumerate(model.example_ids)
    ]
    rubric = Rubric(
        id="synthetic-task",
        text="The agent must search before submitting and produce the expected answer.",
        checks=(
            RubricCheck(name="required_step:search", description="a search call must occur"),
            RubricCheck(name="step_order:search->submit", description="search precedes submit"),
            RubricCheck(name="args_json:submit", description="submit arguments are JSON"),
        ),
    )
    answers = {ex.id: f"answer-{ex.id}" for ex in examples}
    blueprint = Blueprint(
        version_id="v000",
        files={
            STRATEGY_FILE: canonical_json({"handled": [], "risk": "base"}),
            "prompt.md": "Carry out the task carefully, search first, then submit.",
        },
    )
    return SimulatedTask(
        model=model,
        world_seed=seed,
        dataset=Dataset(examples),
        rubric=rubric,
        answers=answers,
        initial_blueprint=blueprint,
    )


__all__ = [
    "DEFAULT_SYMPTOM_POOL",
    "STRATEGY_FILE",
    "SyntheticAgentModel",
    "SimulatedAdapter",
    "SimulatedRcGenerator",
    "SimulatedTask",
    "TrajectoryRow",
    "TrajectoryResult",
    "build_model",
    "build_task",
    "synthesize_records",
    "simulate_step",
    "simulate_trajectory",
]
