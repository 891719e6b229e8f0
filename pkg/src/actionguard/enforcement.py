"""Tiered enforcement: map coverage, risk, and sequence risk to a decision.

The seven tiers form a total order. The mapping is a closed table so the
monotone-in-authority law (risk may raise enforcement but can never turn
an uncovered action into an executed one) is checkable by enumeration.

Tier semantics: allow executes; audit executes with a mandatory trail;
ask defers for human approval; inspect defers pending inspection or
clarification; sandbox executes under a containment wrapper with staged
effects; quarantine stages the effect without applying it; block rejects.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import TYPE_CHECKING, Mapping, Optional

from .action_model import Capability, NormalizedAction
from .trust_pool import TrustTier

if TYPE_CHECKING:  # pragma: no cover
    from .ledger_audit import SequenceRisk
    from .risk_sim import RiskAssessment, RiskLabel


class Decision(IntEnum):
    ALLOW = 0
    AUDIT = 1
    ASK = 2
    INSPECT = 3
    SANDBOX = 4
    QUARANTINE = 5
    BLOCK = 6

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Decision":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown enforcement tier: {text!r}") from None


# Capability classes used by the decision table.
SENSITIVE_CAPABILITIES = frozenset(
    {
        Capability.EXEC,
        Capability.NET,
        Capability.SEND,
        Capability.API_CALL,
        Capability.CONFIG_WRITE,
        Capability.INSTALL,
        Capability.DELETE,
    }
)
TRANSMIT_CAPABILITIES = frozenset({Capability.NET, Capability.SEND, Capability.API_CALL})
_HIGH_BLOCK = TRANSMIT_CAPABILITIES | {Capability.DELETE}

OverrideTable = Mapping[tuple[bool, "RiskLabel", Capability], Decision]


def compare(a: Decision, b: Decision) -> int:
    """Total-order comparison: negative, zero, or positive."""
    return int(a) - int(b)


def base_decision(
    covered: bool,
    label: "RiskLabel",
    capability: Capability,
    guard_floor: Decision,
) -> Decision:
    """The raw table cell, before override, floor raising, and escalation."""
    from .risk_sim import RiskLabel  # local import to avoid a module cycle

    if covered:
        if label is RiskLabel.LOW:
            return Decision.AUDIT if capability in SENSITIVE_CAPABILITIES else Decision.ALLOW
        if label is RiskLabel.AMBIGUOUS:
            return Decision.ASK if capability in TRANSMIT_CAPABILITIES else Decision.INSPECT
        if capability in _HIGH_BLOCK:
            return Decision.BLOCK
        if capability is Capability.EXEC:
            return Decision.SANDBOX
        return Decision.QUARANTINE
    if label is RiskLabel.LOW:
        return guard_floor
    if label is RiskLabel.AMBIGUOUS:
        return max(guard_floor, Decision.INSPECT)
    return Decision.BLOCK


def decide(
    covered: bool,
    risk: "RiskAssessment",
    sigma: "SequenceRisk",
    guard_floor: Decision,
    capability: Capability,
    overrides: Optional[OverrideTable] = None,
) -> Decision:
    """Enforcement tier for one action.

    Base decision from the coverage/risk table (with any validated
    overrides), raised to the guard floor when uncovered, then raised
    again by any sequence-pattern escalation. No step ever lowers the
    tier. Uncovered actions are additionally clamped to at least ASK so
    no floor configuration can make them execute.
    """
    label = risk.label
    tier = None
    if overrides:
        tier = overrides.get((covered, label, capability))
    if tier is None:
        tier = base_decision(covered, label, capability, guard_floor)
    if not covered:
        tier = max(tier, guard_floor, Decision.ASK)
    escalation = sigma.escalation if sigma is not None else None
    if escalation is not None:
        tier = max(tier, escalation)
    return tier


@dataclass(frozen=True)
class DecisionRecord:
    """Everything a decision must carry to be inspectable after the fact."""

    action: NormalizedAction
    covered: bool
    risk: "RiskAssessment"
    sequence_risk: "SequenceRisk"
    target_trust: TrustTier
    outcome: Decision
    rationale: str


class InvalidOverride(ValueError):
    """A configured table override violates the monotone law."""


def validate_overrides(overrides: OverrideTable) -> OverrideTable:
    """Check overrides against the monotone law; invalid tables abort load.

    The effective table (base cells plus overrides, at the default
    inspect floor) must keep uncovered cells out of the execute tiers and
    must stay risk-monotone for every capability.
    """
    from .risk_sim import RiskLabel

    for (covered, label, capability), tier in overrides.items():
        if not covered and tier <= Decision.AUDIT:
            raise InvalidOverride(
                f"override ({label.label}, {capability.value}) maps an uncovered "
                f"cell to {tier.label}; uncovered actions may not execute"
            )
    for capability in Capability:
        for covered in (True, False):
            prev = Decision.ALLOW
            for label in (RiskLabel.LOW, RiskLabel.AMBIGUOUS, RiskLabel.HIGH):
                cell = overrides.get(
                    (covered, label, capability),
                    base_decision(covered, label, capability, Decision.INSPECT),
                )
                if cell < prev:
                    raise InvalidOverride(
                        f"override table is not risk-monotone at "
                        f"({'covered' if covered else 'uncovered'}, {label.label}, "
                        f"{capability.value})"
                    )
                prev = cell
    return overrides
