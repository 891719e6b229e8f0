"""Append-only decision ledger and cross-step sequence audit.

Every guarded action appends one entry: the normalized action, the
authority snapshot, trust, risk, decision, and (once executed or staged)
the observed effect. Sequence patterns run over the ledger so attacks
assembled from individually plausible steps get caught before the final
side effect leaves the runtime. Blocked attempts stay in the ledger and
still count as pattern stages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Optional, Sequence

from .action_model import Capability
from .enforcement import Decision, DecisionRecord
from .risk_sim import RiskTag
from .trust_pool import ProvenanceLabel, TrustSummary


class StepGap(ValueError):
    """Ledger steps must increase by exactly one."""


class UnknownResource(KeyError):
    """Observation references a resource the pool has never labeled."""


class SequenceRiskLevel(IntEnum):
    LOW = 0
    ELEVATED = 1
    CRITICAL = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class SequenceRisk:
    level: SequenceRiskLevel
    matched: tuple[str, ...] = ()
    escalation: Optional[Decision] = None

    @classmethod
    def none(cls) -> "SequenceRisk":
        return cls(level=SequenceRiskLevel.LOW)

    @classmethod
    def from_matches(cls, patterns: Sequence["SequencePattern"]) -> "SequenceRisk":
        if not patterns:
            return cls.none()
        escalation = max(p.escalation for p in patterns)
        level = (
            SequenceRiskLevel.CRITICAL
            if escalation >= Decision.QUARANTINE
            else SequenceRiskLevel.ELEVATED
        )
        return cls(
            level=level,
            matched=tuple(sorted(p.name for p in patterns)),
            escalation=escalation,
        )


@dataclass(frozen=True)
class StagePredicate:
    """Declarative predicate over one ledger entry."""

    capabilities: frozenset[Capability] = frozenset()
    tags_any: frozenset[RiskTag] = frozenset()
    decisions: frozenset[Decision] = frozenset()

    def matches(self, entry: "LedgerEntry") -> bool:
        record = entry.record
        if self.capabilities and record.action.capability not in self.capabilities:
            return False
        if self.tags_any and not (self.tags_any & record.risk.tags):
            return False
        if self.decisions and record.outcome not in self.decisions:
            return False
        return True


@dataclass(frozen=True)
class SequencePattern:
    name: str
    stages: tuple[StagePredicate, ...]
    window: int
    escalation: Decision
    same_target: bool = False

    def __post_init__(self) -> None:
        if len(self.stages) < 2:
            raise ValueError("sequence patterns need at least two stages")
        if self.escalation < Decision.INSPECT:
            raise ValueError("pattern escalation must be at least inspect")


DEFAULT_WINDOW = 50

BUILTIN_PATTERNS: tuple[SequencePattern, ...] = (
    SequencePattern(
        name="secret-read-then-net-send",
        stages=(
            StagePredicate(
                capabilities=frozenset({Capability.READ}),
                tags_any=frozenset({RiskTag.SECRETS}),
            ),
            StagePredicate(capabilities=frozenset({Capability.NET, Capability.SEND})),
        ),
        window=DEFAULT_WINDOW,
        escalation=Decision.BLOCK,
    ),
    SequencePattern(
        name="generated-script-then-execution",
        stages=(
            StagePredicate(capabilities=frozenset({Capability.WRITE})),
            StagePredicate(capabilities=frozenset({Capability.EXEC})),
        ),
        window=DEFAULT_WINDOW,
        escalation=Decision.SANDBOX,
        same_target=True,
    ),
    SequencePattern(
        name="config-change-then-persistence",
        stages=(
            StagePredicate(capabilities=frozenset({Capability.CONFIG_WRITE})),
            StagePredicate(tags_any=frozenset({RiskTag.PERSISTENCE})),
        ),
        window=DEFAULT_WINDOW,
        escalation=Decision.QUARANTINE,
    ),
    SequencePattern(
        name="hidden-recipient-then-send",
        stages=(
            StagePredicate(tags_any=frozenset({RiskTag.HIDDEN_RECIPIENT})),
            StagePredicate(capabilities=frozenset({Capability.SEND})),
        ),
        window=DEFAULT_WINDOW,
        escalation=Decision.BLOCK,
    ),
)


@dataclass
class LedgerEntry:
    step: int
    record: DecisionRecord
    authority_snapshot: tuple[dict, ...]
    trust: TrustSummary
    observed_effect: Optional[str] = None


@dataclass(frozen=True)
class ObservationRecord:
    step: int
    channel: ProvenanceLabel
    resource_id: str
    content_digest: str


@dataclass
class Ledger:
    entries: list[LedgerEntry] = field(default_factory=list)
    observations: list[ObservationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def view(self) -> tuple[LedgerEntry, ...]:
        return tuple(self.entries)


def append(ledger: Ledger, entry: LedgerEntry) -> Ledger:
    """Append one entry; steps must be contiguous and history immutable."""
    expected = ledger.entries[-1].step + 1 if ledger.entries else 0
    if entry.step != expected:
        raise StepGap(f"expected step {expected}, got {entry.step}")
    ledger.entries.append(entry)
    return ledger


def record_observation(ledger: Ledger, obs: ObservationRecord, pool) -> Ledger:
    """Store an observation; its resource must already be labeled."""
    if pool is not None and obs.resource_id not in pool.records:
        raise UnknownResource(obs.resource_id)
    ledger.observations.append(obs)
    return ledger


def _matches_ending_at(
    entries: Sequence[LedgerEntry], pattern: SequencePattern, end: int
) -> bool:
    """Is there a full pattern match whose final stage is entries[end]?

    Stages match a subsequence (other events may interleave); the step
    distance from first to last stage must fit the window; same_target
    binds every stage to the final entry's canonical target.
    """
    last = entries[end]
    stages = pattern.stages
    if not stages[-1].matches(last):
        return False
    anchor = last.record.action.target if pattern.same_target else None

    def search(stage_no: int, start: int, first_step: Optional[int]) -> bool:
        if stage_no == len(stages) - 1:
            first = last.step if first_step is None else first_step
            return last.step - first <= pattern.window
        stage = stages[stage_no]
        for i in range(start, end):
            entry = entries[i]
            if not stage.matches(entry):
                continue
            if anchor is not None and entry.record.action.target != anchor:
                continue
            first = entry.step if first_step is None else first_step
            if last.step - first > pattern.window:
                continue
            if search(stage_no + 1, i + 1, first):
                return True
        return False

    return search(0, 0, None)


def pattern_matches(entries: Sequence[LedgerEntry], pattern: SequencePattern) -> bool:
    return any(_matches_ending_at(entries, pattern, i) for i in range(len(entries)))


def sequence_risk(
    ledger: Ledger, patterns: Sequence[SequencePattern] = BUILTIN_PATTERNS
) -> SequenceRisk:
    """Cumulative sequence risk over the whole ledger."""
    matched = [p for p in patterns if pattern_matches(ledger.entries, p)]
    return SequenceRisk.from_matches(matched)


def completion_risk(
    entries: Sequence[LedgerEntry],
    patterns: Sequence[SequencePattern] = BUILTIN_PATTERNS,
) -> SequenceRisk:
    """Sequence risk attributable to the final entry: patterns completed by
    it. This is what escalates the current decision; a pattern that fully
    matched in the past does not keep escalating unrelated later actions."""
    if not entries:
        return SequenceRisk.none()
    end = len(entries) - 1
    matched = [p for p in patterns if _matches_ending_at(entries, p, end)]
    return SequenceRisk.from_matches(matched)


def brute_force_matches(entries: Sequence[LedgerEntry], pattern: SequencePattern) -> bool:
    """Exhaustive subsequence scan; the test oracle for pattern matching."""
    from itertools import combinations

    k = len(pattern.stages)
    for combo in combinations(range(len(entries)), k):
        if not all(pattern.stages[j].matches(entries[combo[j]]) for j in range(k)):
            continue
        if pattern.same_target:
            targets = {entries[i].record.action.target for i in combo}
            if len(targets) != 1:
                continue
        if entries[combo[-1]].step - entries[combo[0]].step > pattern.window:
            continue
        return True
    return False


def entry_to_json(entry: LedgerEntry) -> dict:
    """Stable serialization for the line-delimited ledger file."""
    record = entry.record
    action = record.action
    return {
        "step": entry.step,
        "action": {
            "capability": action.capability.value,
            "target": action.target,
            "effect": {
                "kind": action.effect.kind.value,
                "summary": action.effect.summary,
                "reversible": action.effect.reversible,
            },
            "influencing_resource": action.influencing_resource,
            "tool_name": action.raw.tool_name,
            "substrate": action.raw.substrate.value,
        },
        "covered": record.covered,
        "risk": {
            "label": record.risk.label.label,
            "tags": sorted(t.value for t in record.risk.tags),
            "source": record.risk.source.value,
            "rationale": record.risk.rationale,
        },
        "sequence_risk": {
            "level": record.sequence_risk.level.label,
            "matched": list(record.sequence_risk.matched),
        },
        "target_trust": record.target_trust.label,
        "outcome": record.outcome.label,
        "rationale": record.rationale,
        "authority_snapshot": list(entry.authority_snapshot),
        "observed_effect": entry.observed_effect,
    }


def render_entry(entry: LedgerEntry) -> str:
    return json.dumps(entry_to_json(entry), sort_keys=True, separators=(",", ":"))


class LedgerWriter:
    """Lazily appends finalized entries to a per-session JSONL file.

    An entry is finalized once the next entry begins (or on close), by
    which point any observed effect has been recorded; the file itself is
    strictly append-only.
    """

    def __init__(self, path) -> None:
        self.path = path
        self._written = 0
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("", encoding="utf-8")

    def sync(self, ledger: Ledger, upto: Optional[int] = None) -> None:
        limit = len(ledger.entries) if upto is None else upto
        if limit <= self._written:
            return
        with self.path.open("a", encoding="utf-8") as fh:
            for entry in ledger.entries[self._written : limit]:
                fh.write(render_entry(entry) + "\n")
        self._written = limit

    def close(self, ledger: Ledger) -> None:
        self.sync(ledger)
