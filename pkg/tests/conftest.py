import pytest

from actionguard.action_model import (
    Capability,
    EffectKind,
    ExpectedEffect,
    NormalizedAction,
    RawToolCall,
    Substrate,
)
from actionguard.authority import GrantSpec, Ttl
from actionguard.enforcement import Decision, DecisionRecord
from actionguard.guard_core import TaskSpec
from actionguard.ledger_audit import LedgerEntry, SequenceRisk
from actionguard.policy import default_policy
from actionguard.risk_sim import RiskAssessment, RiskLabel, RiskSource
from actionguard.trust_pool import TrustSummary, TrustTier


@pytest.fixture
def policy():
    return default_policy()


@pytest.fixture
def workspace_grant():
    return GrantSpec(
        capabilities=frozenset({Capability.READ, Capability.WRITE, Capability.RESPOND}),
        targets=("/workspace/**",),
        lifetime=Ttl.task_scoped(),
        fallback=Decision.INSPECT,
    )


@pytest.fixture
def task(workspace_grant):
    return TaskSpec(
        task_text="Summarize /workspace/notes.md into /workspace/results/report.md",
        policy_ref="default",
        grant=workspace_grant,
    )


def make_raw(
    tool="read_file",
    step=0,
    session="s1",
    substrate=Substrate.REPLAY,
    **arguments,
):
    return RawToolCall(
        session_id=session,
        step_index=step,
        tool_name=tool,
        arguments=arguments,
        substrate=substrate,
    )


def make_action(
    capability=Capability.READ,
    target="/workspace/notes.md",
    effect_kind=EffectKind.OBSERVE,
    summary="",
    influencer=None,
    recipients=(),
    tool="read_file",
    step=0,
):
    raw = make_raw(tool=tool, step=step)
    return NormalizedAction(
        capability=capability,
        target=target,
        effect=ExpectedEffect(kind=effect_kind, summary=summary or effect_kind.value, reversible=True),
        influencing_resource=influencer,
        raw=raw,
        raw_target=target,
        recipients=tuple(recipients),
    )


def make_entry(
    step,
    capability=Capability.READ,
    target="/workspace/notes.md",
    tags=(),
    outcome=Decision.ALLOW,
    executed=True,
    resource_trust=TrustTier.T3_AUTHORITY,
):
    action = make_action(capability=capability, target=target, step=step)
    risk = RiskAssessment(
        label=RiskLabel.HIGH if tags else RiskLabel.LOW,
        tags=frozenset(tags),
        source=RiskSource.RULES,
        rationale="test",
    )
    trust = TrustSummary(
        resource_trust=resource_trust,
        target_trust=TrustTier.T2_HIGH,
        active_constraints=frozenset(),
    )
    record = DecisionRecord(
        action=action,
        covered=True,
        risk=risk,
        sequence_risk=SequenceRisk.none(),
        target_trust=trust.target_trust,
        outcome=outcome,
        rationale="test",
    )
    return LedgerEntry(
        step=step,
        record=record,
        authority_snapshot=(),
        trust=trust,
        observed_effect="done" if executed else None,
    )
