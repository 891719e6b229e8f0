import random
from functools import reduce

import pytest

from actionguard.action_model import Capability
from actionguard.enforcement import (
    Decision,
    InvalidOverride,
    SENSITIVE_CAPABILITIES,
    TRANSMIT_CAPABILITIES,
    compare,
    decide,
    validate_overrides,
)
from actionguard.ledger_audit import SequenceRisk, SequenceRiskLevel
from actionguard.risk_sim import RiskAssessment, RiskLabel, RiskSource


def risk(label):
    return RiskAssessment(
        label=label,
        tags=frozenset(),
        source=RiskSource.RULES,
        rationale="test",
    )


# Canonical sequence-risk values for enumeration: low carries no
# escalation, elevated escalates to sandbox, critical to block.
SIGMA = {
    SequenceRiskLevel.LOW: SequenceRisk.none(),
    SequenceRiskLevel.ELEVATED: SequenceRisk(
        level=SequenceRiskLevel.ELEVATED, matched=("m",), escalation=Decision.SANDBOX
    ),
    SequenceRiskLevel.CRITICAL: SequenceRisk(
        level=SequenceRiskLevel.CRITICAL, matched=("m",), escalation=Decision.BLOCK
    ),
}


class TestDecideTable:
    def test_uncovered_low_read_floors_to_inspect(self):
        got = decide(False, risk(RiskLabel.LOW), SIGMA[SequenceRiskLevel.LOW],
                     Decision.INSPECT, Capability.READ)
        assert got is Decision.INSPECT

    def test_covered_low_read_allows_with_audit_record(self):
        got = decide(True, risk(RiskLabel.LOW), SIGMA[SequenceRiskLevel.LOW],
                     Decision.INSPECT, Capability.READ)
        assert got is Decision.ALLOW

    def test_uncovered_high_net_blocks(self):
        for sigma in SIGMA.values():
            for floor in (Decision.AUDIT, Decision.INSPECT, Decision.BLOCK):
                got = decide(False, risk(RiskLabel.HIGH), sigma, floor, Capability.NET)
                assert got is Decision.BLOCK

    def test_covered_low_sensitive_audits(self):
        for capability in SENSITIVE_CAPABILITIES:
            got = decide(True, risk(RiskLabel.LOW), SIGMA[SequenceRiskLevel.LOW],
                         Decision.INSPECT, capability)
            assert got is Decision.AUDIT

    def test_covered_ambiguous_transmit_asks(self):
        for capability in TRANSMIT_CAPABILITIES:
            got = decide(True, risk(RiskLabel.AMBIGUOUS), SIGMA[SequenceRiskLevel.LOW],
                         Decision.INSPECT, capability)
            assert got is Decision.ASK

    def test_covered_high_tiers(self):
        low_sigma = SIGMA[SequenceRiskLevel.LOW]
        assert decide(True, risk(RiskLabel.HIGH), low_sigma, Decision.INSPECT, Capability.SEND) is Decision.BLOCK
        assert decide(True, risk(RiskLabel.HIGH), low_sigma, Decision.INSPECT, Capability.DELETE) is Decision.BLOCK
        assert decide(True, risk(RiskLabel.HIGH), low_sigma, Decision.INSPECT, Capability.EXEC) is Decision.SANDBOX
        assert decide(True, risk(RiskLabel.HIGH), low_sigma, Decision.INSPECT, Capability.WRITE) is Decision.QUARANTINE
        assert decide(True, risk(RiskLabel.HIGH), low_sigma, Decision.INSPECT, Capability.INSTALL) is Decision.QUARANTINE

    def test_sequence_escalation_raises_but_never_lowers(self):
        base = decide(True, risk(RiskLabel.LOW), SIGMA[SequenceRiskLevel.LOW],
                      Decision.INSPECT, Capability.SEND)
        escalated = decide(True, risk(RiskLabel.LOW), SIGMA[SequenceRiskLevel.CRITICAL],
                           Decision.INSPECT, Capability.SEND)
        assert base is Decision.AUDIT
        assert escalated is Decision.BLOCK


class TestMonotoneLaw:
    def test_exhaustive_enumeration(self):
        cells = 0
        for covered in (True, False):
            for label in RiskLabel:
                for level in SequenceRiskLevel:
                    for capability in Capability:
                        outcome = decide(
                            covered, risk(label), SIGMA[level], Decision.INSPECT, capability
                        )
                        cells += 1
                        assert isinstance(outcome, Decision)
                        if not covered:
                            assert outcome not in (Decision.ALLOW, Decision.AUDIT)
        assert cells == 2 * 3 * 3 * len(Capability) == 180

    def test_uncovered_never_executes_under_any_floor(self):
        for floor in Decision:
            if floor is Decision.ALLOW:
                continue  # rejected at mint time
            for label in RiskLabel:
                for capability in Capability:
                    outcome = decide(False, risk(label), SequenceRisk.none(), floor, capability)
                    assert outcome not in (Decision.ALLOW, Decision.AUDIT)

    def test_risk_monotonicity(self):
        for covered in (True, False):
            for level in SequenceRiskLevel:
                for capability in Capability:
                    outcomes = [
                        decide(covered, risk(label), SIGMA[level], Decision.INSPECT, capability)
                        for label in (RiskLabel.LOW, RiskLabel.AMBIGUOUS, RiskLabel.HIGH)
                    ]
                    assert outcomes == sorted(outcomes)

    def test_sequence_monotonicity(self):
        for covered in (True, False):
            for label in RiskLabel:
                for capability in Capability:
                    outcomes = [
                        decide(covered, risk(label), SIGMA[level], Decision.INSPECT, capability)
                        for level in SequenceRiskLevel
                    ]
                    assert outcomes == sorted(outcomes)


class TestCompare:
    def test_lattice_extremes(self):
        assert compare(Decision.ALLOW, Decision.BLOCK) < 0

    def test_fixed_order(self):
        assert compare(Decision.ASK, Decision.INSPECT) < 0
        order = [Decision.ALLOW, Decision.AUDIT, Decision.ASK, Decision.INSPECT,
                 Decision.SANDBOX, Decision.QUARANTINE, Decision.BLOCK]
        assert order == sorted(order)

    def test_max_equals_fold_of_pairwise_max(self):
        rng = random.Random(9)
        for _ in range(100):
            sample = [rng.choice(list(Decision)) for _ in range(rng.randint(1, 12))]
            assert max(sample) == reduce(lambda a, b: a if compare(a, b) >= 0 else b, sample)


class TestOverrides:
    def test_valid_override_accepted(self):
        table = {(True, RiskLabel.LOW, Capability.READ): Decision.AUDIT}
        assert validate_overrides(table) == table

    def test_uncovered_execute_override_aborts(self):
        with pytest.raises(InvalidOverride):
            validate_overrides({(False, RiskLabel.LOW, Capability.READ): Decision.ALLOW})

    def test_risk_non_monotone_override_aborts(self):
        with pytest.raises(InvalidOverride):
            validate_overrides({(True, RiskLabel.HIGH, Capability.READ): Decision.ALLOW})

    def test_override_flows_through_decide(self):
        table = validate_overrides({(True, RiskLabel.LOW, Capability.READ): Decision.AUDIT})
        got = decide(True, risk(RiskLabel.LOW), SequenceRisk.none(), Decision.INSPECT,
                     Capability.READ, overrides=table)
        assert got is Decision.AUDIT
