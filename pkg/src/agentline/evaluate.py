"""Run + score + critique one blueprint over one split, yielding quality records.

This is the single evaluation routine behind iteration runs, RC gating runs,
and the final test-set report, so every pass indicator in the system is
computed exactly the same way.
"""

from __future__ import annotations

from dataclasses import dataclass

from .canonical import derive_seed
from .critic import build_critic_input, check_blindness, judge
from .generators import Generator
from .harness import AgentAdapter, Blueprint, RunSet, run_examples
from .records import (
    Dataset,
    QualityRecord,
    Rubric,
    SymptomTaxonomy,
    make_quality_record,
)
from .scoring import Scorer, score


@dataclass(frozen=True)
class EvaluationResult:
    records: list[QualityRecord]
    run_set: RunSet
    new_labels: tuple[str, ...]


def evaluate_split(
    adapter: AgentAdapter,
    blueprint: Blueprint,
    dataset: Dataset,
    split: str,
    rubric: Rubric,
    scorer: Scorer | None,
    critic_generator: Generator,
    taxonomy: SymptomTaxonomy,
    *,
    seed: int,
    iteration: int,
    parallelism: int = 1,
    allow_test: bool = False,
    enforce_blindness: bool = True,
    unsafe_blueprint_context: bool = False,
) -> EvaluationResult:
    """Produce one QualityRecord per example of the split, in dataset order.

    ``unsafe_blueprint_context`` exists solely for the non-blind ablation arm
    and leaks the blueprint files into the critic input; never enable it
    outside that experiment.
    """
    # Exactly one dataset read per evaluation; the hygiene audit counts these.
    examples = dataset.examples(split, allow_test=allow_test)
    run_set = run_examples(
        adapter,
        blueprint,
        examples,
        split,
        parallelism=parallelism,
        seed=seed,
        iteration=iteration,
    )
    records: list[QualityRecord] = []
    new_labels: list[str] = []
    for example in examples:
        result = run_set.results[example.id]
        grade = None
        if scorer is not None:
            grade = score(scorer, result.output, result.trace, rubric)
        critic_input = build_critic_input(
            rubric,
            result.trace,
            grade,
            taxonomy,
            unsafe_blueprint_context=dict(blueprint.files) if unsafe_blueprint_context else None,
        )
        if enforce_blindness and not unsafe_blueprint_context:
            check_blindness(critic_input, blueprint)
        verdict = judge(critic_generator, critic_input, derive_seed(seed, "critic", example.id))
        record = make_quality_record(result.output, result.trace, grade, verdict, iteration)
        records.append(record)
        label = verdict.symptom_label
        if label and not verdict.pass_judgment and label not in taxonomy and label not in new_labels:
            new_labels.append(label)
    return EvaluationResult(records=records, run_set=run_set, new_labels=tuple(new_labels))


__all__ = ["EvaluationResult", "evaluate_split"]
