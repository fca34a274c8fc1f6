"""Release acceptance over flip evidence, and the stopping predicate.

The gate is a total, auditable decision: every enabled rule records its
observed inputs and outcome, and the candidate is accepted only when all of
them pass. Default thresholds are the simplest rule set that separates
accepted from rejected releases in practice: regressions capped at 1% of
the prior pass set, at least 60% of fixes on-intent, and strictly more
fixes than regressions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from .flips import FlipReport


@dataclass(frozen=True)
class GateConfig:
    max_rho_p2f: float = 0.01
    min_hit_rate: float = 0.6
    require_net_positive: bool = True
    max_abs_p2f: int | None = None
    enabled: bool = True  # ablation toggle: disabled -> auto-accept

    def __post_init__(self) -> None:
        if not 0.0 <= self.max_rho_p2f <= 1.0:
            raise ValueError("max_rho_p2f must be in [0, 1]")
        if not 0.0 <= self.min_hit_rate <= 1.0:
            raise ValueError("min_hit_rate must be in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_rho_p2f": self.max_rho_p2f,
            "min_hit_rate": self.min_hit_rate,
            "require_net_positive": self.require_net_positive,
            "max_abs_p2f": self.max_abs_p2f,
            "enabled": self.enabled,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GateConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass(frozen=True)
class RuleOutcome:
    rule: str
    passed: bool
    observed: Any
    threshold: Any
    note: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule": self.rule,
            "passed": self.passed,
            "observed": self.observed,
            "threshold": self.threshold,
            "note": self.note,
        }


@dataclass(frozen=True)
class GateDecision:
    accept: bool
    reasons: tuple[RuleOutcome, ...]
    flip_report_hash: str | None = None

    def __post_init__(self) -> None:
        if not self.reasons:
            raise ValueError("a gate decision must carry at least one rule outcome")

    def to_dict(self) -> dict[str, Any]:
        return {
            "accept": self.accept,
            "reasons": [r.to_dict() for r in self.reasons],
            "flip_report_hash": self.flip_report_hash,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GateDecision":
        return cls(
            accept=data["accept"],
            reasons=tuple(
                RuleOutcome(
                    rule=r["rule"],
                    passed=r["passed"],
                    observed=r.get("observed"),
                    threshold=r.get("threshold"),
                    note=r.get("note", ""),
                )
                for r in data["reasons"]
            ),
            flip_report_hash=data.get("flip_report_hash"),
        )


def decide(
    flip_report: FlipReport,
    intent_targets: Iterable[str],
    config: GateConfig,
    *,
    flip_report_hash: str | None = None,
) -> GateDecision:
    """Accept iff every enabled rule passes; the decision is total and
    records one outcome per rule for the audit trail.
    """
    targets = [t for t in intent_targets if t]
    if not config.enabled:
        return GateDecision(
            accept=True,
            reasons=(
                RuleOutcome(
                    rule="gate_disabled",
                    passed=True,
                    observed=None,
                    threshold=None,
                    note="flip gate disabled by configuration; auto-accept",
                ),
            ),
            flip_report_hash=flip_report_hash,
        )

    reasons: list[RuleOutcome] = []

    reasons.append(
        RuleOutcome(
            rule="regression_rate",
            passed=flip_report.rho_p2f <= config.max_rho_p2f,
            observed=flip_report.rho_p2f,
            threshold=config.max_rho_p2f,
        )
    )

    if not targets:
        reasons.append(
            RuleOutcome(
                rule="intent_hit_rate",
                passed=True,
                observed=flip_report.hit_rate,
                threshold=config.min_hit_rate,
                note="skipped: candidate declared no target symptoms",
            )
        )
    elif flip_report.hit_rate is None:
        reasons.append(
            RuleOutcome(
                rule="intent_hit_rate",
                passed=False,
                observed=None,
                threshold=config.min_hit_rate,
                note="no fixes to evaluate intent against",
            )
        )
    else:
        reasons.append(
            RuleOutcome(
                rule="intent_hit_rate",
                passed=flip_report.hit_rate >= config.min_hit_rate,
                observed=flip_report.hit_rate,
                threshold=config.min_hit_rate,
            )
        )

    if config.require_net_positive:
        reasons.append(
            RuleOutcome(
                rule="net_positive_flips",
                passed=len(flip_report.f2p_ids) > len(flip_report.p2f_ids),
                observed={"f2p": len(flip_report.f2p_ids), "p2f": len(flip_report.p2f_ids)},
                threshold="f2p > p2f",
            )
        )

    if config.max_abs_p2f is not None:
        reasons.append(
            RuleOutcome(
                rule="absolute_regressions",
                passed=len(flip_report.p2f_ids) <= config.max_abs_p2f,
                observed=len(flip_report.p2f_ids),
                threshold=config.max_abs_p2f,
            )
        )

    return GateDecision(
        accept=all(r.passed for r in reasons),
        reasons=tuple(reasons),
        flip_report_hash=flip_report_hash,
    )


@dataclass(frozen=True)
class StopConfig:
    small_fix_threshold: int = 5
    small_fix_window: int = 2
    consecutive_reject_limit: int = 3
    rho_increase_window: int = 3
    max_iterations: int = 20

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "StopConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass(frozen=True)
class HistoryEntry:
    iteration: int
    flip_report: FlipReport
    decision: GateDecision

    @property
    def accepted(self) -> bool:
        return self.decision.accept


@dataclass(frozen=True)
class StopDecision:
    stop: bool
    conditions: tuple[str, ...]
    details: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"stop": self.stop, "conditions": list(self.conditions), "details": self.details}


def f2p_concentration(history: Sequence[HistoryEntry]) -> float:
    """Share of the latest fix set already seen in earlier fix sets.

    Gains concentrating on a recurring subset are an overfitting smell; this
    is reported for review but never fires the stop predicate on its own.
    """
    if not history:
        return 0.0
    latest = history[-1].flip_report.f2p_ids
    if not latest:
        return 0.0
    earlier: set[str] = set()
    for entry in history[:-1]:
        earlier |= entry.flip_report.f2p_ids
    return len(latest & earlier) / len(latest)


def should_stop(history: Sequence[HistoryEntry], config: StopConfig) -> StopDecision:
    """Evaluate the stopping predicate over the evaluation history.

    Fires when any of: (a) fixes stayed at or below the small-fix threshold
    for a full window; (b) the regression rate rose strictly across the last
    window of *accepted* evaluations (rejected candidates never shipped, so
    they do not witness the line's own trend); (c) the last N candidates
    were all rejected; (d) the iteration budget is exhausted.
    """
    if not history:
        raise ValueError("history must be non-empty")
    entries = sorted(history, key=lambda e: e.iteration)
    fired: list[str] = []
    details: dict[str, Any] = {}

    # Failed syntheses are rejections (condition c below) but carry no flip
    # evidence, so they cannot witness low fix yield.
    evaluated = [e for e in entries if not e.flip_report.extra.get("rc_failed")]
    window = evaluated[-config.small_fix_window :]
    if len(window) == config.small_fix_window and all(
        len(e.flip_report.f2p_ids) <= config.small_fix_threshold for e in window
    ):
        fired.append("small_fix_yield")
        details["small_fix_yield"] = [len(e.flip_report.f2p_ids) for e in window]

    accepted_rhos = [e.flip_report.rho_p2f for e in entries if e.accepted]
    tail = accepted_rhos[-config.rho_increase_window :]
    if len(tail) == config.rho_increase_window and all(
        tail[i] < tail[i + 1] for i in range(len(tail) - 1)
    ):
        fired.append("regression_rate_increasing")
        details["regression_rate_increasing"] = tail

    rejects = 0
    for entry in reversed(entries):
        if entry.accepted:
            break
        rejects += 1
    if rejects >= config.consecutive_reject_limit:
        fired.append("consecutive_rejections")
        details["consecutive_rejections"] = rejects

    if entries[-1].iteration >= config.max_iterations:
        fired.append("iteration_budget")
        details["iteration_budget"] = entries[-1].iteration

    details["f2p_concentration"] = f2p_concentration(entries)
    return StopDecision(stop=bool(fired), conditions=tuple(fired), details=details)


__all__ = [
    "GateConfig",
    "GateDecision",
    "RuleOutcome",
    "StopConfig",
    "StopDecision",
    "HistoryEntry",
    "decide",
    "should_stop",
    "f2p_concentration",
]
