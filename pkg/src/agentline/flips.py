"""Example-level flip analysis between the current version and a candidate.

Flips are the core gating evidence: pass->fail regressions and fail->pass
fixes, their rates against the prior pass/fail populations (epsilon-guarded),
cumulative progress against the iteration-0 baseline, and the fraction of
fixes landing on symptoms the candidate claimed to target.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

from .records import QualityRecord

DEFAULT_EPSILON = 1e-9


class FlipDomainError(ValueError):
    """Two pass vectors do not cover the same example ids."""


@dataclass(frozen=True)
class PassVector:
    """Pass indicator per example for one version or candidate."""

    tag: str
    passes: Mapping[str, bool]

    def __post_init__(self) -> None:
        object.__setattr__(self, "passes", dict(self.passes))

    def __len__(self) -> int:
        return len(self.passes)

    @property
    def pass_ids(self) -> set[str]:
        return {ex_id for ex_id, ok in self.passes.items() if ok}

    @property
    def fail_ids(self) -> set[str]:
        return {ex_id for ex_id, ok in self.passes.items() if not ok}

    @classmethod
    def from_records(cls, tag: str, records: list[QualityRecord]) -> "PassVector":
        return cls(tag=tag, passes={r.example_id: r.final_pass for r in records})


def _require_same_domain(prev: PassVector, cand: PassVector) -> None:
    missing = set(prev.passes) - set(cand.passes)
    extra = set(cand.passes) - set(prev.passes)
    if missing or extra:
        raise FlipDomainError(
            f"pass vector domains differ: missing from candidate {sorted(missing)[:5]}, "
            f"unknown in candidate {sorted(extra)[:5]}"
        )


def compute_flips(prev: PassVector, cand: PassVector) -> tuple[set[str], set[str]]:
    """(pass->fail ids, fail->pass ids) between two vectors over one domain."""
    _require_same_domain(prev, cand)
    p2f = {x for x, ok in prev.passes.items() if ok and not cand.passes[x]}
    f2p = {x for x, ok in prev.passes.items() if not ok and cand.passes[x]}
    return p2f, f2p


def flip_rates(
    p2f_ids: set[str],
    f2p_ids: set[str],
    prev: PassVector,
    epsilon: float = DEFAULT_EPSILON,
) -> tuple[float, float]:
    """Flip counts normalized by the prior pass/fail populations.

    The epsilon guard keeps the rates total on degenerate vectors (no prior
    passes or no prior failures), where the corresponding flip set is
    necessarily empty and the rate is 0.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    rho_p2f = len(p2f_ids) / (len(prev.pass_ids) + epsilon)
    rho_f2p = len(f2p_ids) / (len(prev.fail_ids) + epsilon)
    return rho_p2f, rho_f2p


def cumulative_stats(
    baseline: PassVector, current: PassVector, epsilon: float = DEFAULT_EPSILON
) -> tuple[float, float]:
    """(fixed-to-pass, pass-to-pass) fractions against the iteration-0 baseline.

    ftp: share of originally-failing examples now passing. p2p: share of
    originally-passing examples still passing. Vacuous denominators resolve
    by convention: no original failures -> ftp 0.0, no original passes ->
    p2p 1.0.
    """
    _require_same_domain(baseline, current)
    base_fail = baseline.fail_ids
    base_pass = baseline.pass_ids
    if base_fail:
        ftp = sum(1 for x in base_fail if current.passes[x]) / (len(base_fail) + epsilon)
    else:
        ftp = 0.0
    if base_pass:
        p2p = sum(1 for x in base_pass if current.passes[x]) / (len(base_pass) + epsilon)
    else:
        p2p = 1.0
    return ftp, p2p


def hit_rate(
    f2p_ids: set[str],
    prev_records: Mapping[str, QualityRecord],
    target_symptoms: set[str] | frozenset[str],
    epsilon: float = DEFAULT_EPSILON,
) -> float | None:
    """Fraction of fixes whose previous symptom was one the candidate targeted.

    Returns None when there are no fixes: an empty fix set is non-evidence,
    not a 0% hit rate.
    """
    if not f2p_ids:
        return None
    hits = 0
    for ex_id in f2p_ids:
        record = prev_records.get(ex_id)
        if record is not None and record.critic.symptom_label in target_symptoms:
            hits += 1
    return hits / (len(f2p_ids) + epsilon)


@dataclass(frozen=True)
class FlipReport:
    """Complete flip evidence for one current-vs-candidate comparison."""

    prev_tag: str
    cand_tag: str
    p2f_ids: frozenset[str]
    f2p_ids: frozenset[str]
    rho_p2f: float
    rho_f2p: float
    epsilon: float
    ftp: float
    p2p: float
    hit_rate: float | None
    prev_pass_count: int
    prev_fail_count: int
    cand_pass_count: int
    domain_size: int
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.p2f_ids & self.f2p_ids:
            raise ValueError("p2f and f2p sets must be disjoint")
        for name in ("rho_p2f", "rho_f2p", "ftp", "p2p"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.hit_rate is not None and not 0.0 <= self.hit_rate <= 1.0:
            raise ValueError(f"hit_rate={self.hit_rate} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        # Explicit id lists (sorted) are an auditability requirement.
        return {
            "prev_tag": self.prev_tag,
            "cand_tag": self.cand_tag,
            "p2f_ids": sorted(self.p2f_ids),
            "f2p_ids": sorted(self.f2p_ids),
            "rho_p2f": self.rho_p2f,
            "rho_f2p": self.rho_f2p,
            "epsilon": self.epsilon,
            "ftp": self.ftp,
            "p2p": self.p2p,
            "hit_rate": self.hit_rate,
            "prev_pass_count": self.prev_pass_count,
            "prev_fail_count": self.prev_fail_count,
            "cand_pass_count": self.cand_pass_count,
            "domain_size": self.domain_size,
            **self.extra,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FlipReport":
        known = {
            "prev_tag",
            "cand_tag",
            "p2f_ids",
            "f2p_ids",
            "rho_p2f",
            "rho_f2p",
            "epsilon",
            "ftp",
            "p2p",
            "hit_rate",
            "prev_pass_count",
            "prev_fail_count",
            "cand_pass_count",
            "domain_size",
        }
        return cls(
            prev_tag=data["prev_tag"],
            cand_tag=data["cand_tag"],
            p2f_ids=frozenset(data["p2f_ids"]),
            f2p_ids=frozenset(data["f2p_ids"]),
            rho_p2f=data["rho_p2f"],
            rho_f2p=data["rho_f2p"],
            epsilon=data["epsilon"],
            ftp=data["ftp"],
            p2p=data["p2p"],
            hit_rate=data.get("hit_rate"),
            prev_pass_count=data["prev_pass_count"],
            prev_fail_count=data["prev_fail_count"],
            cand_pass_count=data["cand_pass_count"],
            domain_size=data["domain_size"],
            extra={k: v for k, v in data.items() if k not in known},
        )


def build_flip_report(
    prev: PassVector,
    cand: PassVector,
    baseline: PassVector,
    prev_records: Mapping[str, QualityRecord] | None = None,
    target_symptoms: set[str] | frozenset[str] | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> FlipReport:
    """Assemble the full report for one comparison.

    ``baseline`` is the iteration-0 vector; cumulative stats are computed
    against it from the *candidate* state, matching per-row table semantics.
    """
    p2f, f2p = compute_flips(prev, cand)
    rho_p2f, rho_f2p = flip_rates(p2f, f2p, prev, epsilon)
    ftp, p2p = cumulative_stats(baseline, cand, epsilon)
    hit = None
    if prev_records is not None and target_symptoms is not None:
        hit = hit_rate(f2p, prev_records, target_symptoms, epsilon)
    return FlipReport(
        prev_tag=prev.tag,
        cand_tag=cand.tag,
        p2f_ids=frozenset(p2f),
        f2p_ids=frozenset(f2p),
        rho_p2f=min(rho_p2f, 1.0),
        rho_f2p=min(rho_f2p, 1.0),
        epsilon=epsilon,
        ftp=min(ftp, 1.0),
        p2p=min(p2p, 1.0),
        hit_rate=min(hit, 1.0) if hit is not None else None,
        prev_pass_count=len(prev.pass_ids),
        prev_fail_count=len(prev.fail_ids),
        cand_pass_count=len(cand.pass_ids),
        domain_size=len(prev),
    )


__all__ = [
    "DEFAULT_EPSILON",
    "FlipDomainError",
    "PassVector",
    "FlipReport",
    "compute_flips",
    "flip_rates",
    "cumulative_stats",
    "hit_rate",
    "build_flip_report",
]
