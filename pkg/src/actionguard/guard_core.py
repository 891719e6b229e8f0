"""Session orchestration: the five-layer pipeline behind check_action.

Per proposed action, in order: drop expired authority, normalize the
call, summarize trust, test coverage across the active contexts, assess
risk, fold in sequence escalation, decide, and append the ledger entry
before any result is returned. Deferred actions park in a pending queue
until an operator approves or denies them; approval mints a single-use
consent grant and re-runs the pipeline rather than short-circuiting to
execute.
"""

from __future__ import annotations

import itertools
import logging
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

from . import ledger_audit
from .action_model import MalformedCall, NormalizedAction, RawToolCall, normalize
from .authority import (
    EXPIRED,
    AuthorityContext,
    GrantSpec,
    InvalidFallback,
    Issuer,
    Ttl,
    covered_by_any,
    mint_task_authority,
    tick,
)
from .enforcement import Decision, DecisionRecord, decide
from .ledger_audit import (
    Ledger,
    LedgerEntry,
    LedgerWriter,
    ObservationRecord,
    SequenceRisk,
    StepGap,
)
from .policy import Policy, make_oracle
from .risk_sim import InspectionRecord, RiskSimulator, digest_of
from .trust_pool import ProvenanceLabel, TrustPool, TrustSummary, trust_summary

logger = logging.getLogger(__name__)

REDACTION_MARKER = "[REDACTED]"

# Value-shaped secret signatures for output redaction.
REDACTION_SIGNATURES = (
    r"AKIA[0-9A-Z]{16}",
    r"ghp_[A-Za-z0-9]{20,}",
    r"xox[baprs]-[A-Za-z0-9-]{10,}",
    r"eyJ[A-Za-z0-9_-]{8,}\.[A-Za-z0-9_-]{8,}\.[A-Za-z0-9_-]{8,}",
    r"-----BEGIN [A-Z ]*PRIVATE KEY-----(?:.|\n)*?-----END [A-Z ]*PRIVATE KEY-----",
    r"(?i)\b(?:password|passwd|secret|token|api_key|apikey|access_key)\b\s*[=:]\s*\S+",
)


class InvalidGrant(ValueError):
    """Task grant rejected (for example, an allow fallback)."""


class UnknownPending(KeyError):
    """No deferred action with this id awaits resolution."""


class InvalidApprover(ValueError):
    """Approvals must come from the explicit-consent channel."""


class Disposition(str, Enum):
    EXECUTE = "execute"
    EXECUTE_AUDITED = "execute_audited"
    DEFERRED_ASK = "deferred_ask"
    DEFERRED_INSPECT = "deferred_inspect"
    STAGED_SANDBOX = "staged_sandbox"
    STAGED_QUARANTINE = "staged_quarantine"
    REJECTED = "rejected"


_DISPOSITIONS: dict[Decision, Disposition] = {
    Decision.ALLOW: Disposition.EXECUTE,
    Decision.AUDIT: Disposition.EXECUTE_AUDITED,
    Decision.ASK: Disposition.DEFERRED_ASK,
    Decision.INSPECT: Disposition.DEFERRED_INSPECT,
    Decision.SANDBOX: Disposition.STAGED_SANDBOX,
    Decision.QUARANTINE: Disposition.STAGED_QUARANTINE,
    Decision.BLOCK: Disposition.REJECTED,
}

EXECUTING_DISPOSITIONS = frozenset({Disposition.EXECUTE, Disposition.EXECUTE_AUDITED})


@dataclass(frozen=True)
class TaskSpec:
    task_text: str
    policy_ref: str
    grant: GrantSpec

    def __post_init__(self) -> None:
        if not self.task_text:
            raise ValueError("task_text must be non-empty")


@dataclass(frozen=True)
class CheckResult:
    record: DecisionRecord
    disposition: Disposition
    action_id: Optional[str]
    step: int


@dataclass
class PendingAction:
    action_id: str
    raw: RawToolCall
    result: CheckResult


EventCallback = Callable[[dict], None]


@dataclass
class Session:
    session_id: str
    task: TaskSpec
    policy: Policy
    active_contexts: list[AuthorityContext]
    guard_floor: Decision
    pool: TrustPool
    ledger: Ledger
    risk_sim: RiskSimulator
    pending: dict[str, PendingAction] = field(default_factory=dict)
    inspections: dict[str, InspectionRecord] = field(default_factory=dict)
    clock: Callable[[], float] = time.time
    on_event: Optional[EventCallback] = None
    writer: Optional[LedgerWriter] = None
    next_step: int = 0
    _action_ids: itertools.count = field(default_factory=lambda: itertools.count(1))

    def emit(self, event: dict) -> None:
        if self.on_event is not None:
            self.on_event(event)

    def close(self) -> None:
        if self.writer is not None:
            self.writer.close(self.ledger)


def open_session(
    task: TaskSpec,
    policy: Policy,
    session_id: Optional[str] = None,
    clock: Callable[[], float] = time.time,
    on_event: Optional[EventCallback] = None,
) -> Session:
    """Start a guarded session: mint the root grant, seed the pool with the
    task text as an authority-tier resource, and open the ledger."""
    session_id = session_id or f"session-{int(clock() * 1000)}"
    try:
        root = mint_task_authority(Issuer.USER, session_id, task.grant)
    except (InvalidFallback, ValueError) as exc:
        raise InvalidGrant(str(exc)) from exc
    pool = TrustPool(policy.trust)
    task_digest = digest_of(task.task_text.encode("utf-8"))
    pool.label_resource(
        origin="task:user-request",
        channel=ProvenanceLabel.USER_INPUT,
        content_digest=task_digest,
        step=0,
        content=task.task_text,
    )
    ledger = Ledger()
    ledger_audit.record_observation(
        ledger,
        ObservationRecord(
            step=0,
            channel=ProvenanceLabel.USER_INPUT,
            resource_id="task:user-request",
            content_digest=task_digest,
        ),
        pool,
    )
    simulator = RiskSimulator(policy.risk, policy.trust)
    simulator.set_oracle(make_oracle(policy.oracle))
    writer = None
    if policy.ledger_dir is not None:
        writer = LedgerWriter(policy.ledger_dir / f"{session_id}.jsonl")
    return Session(
        session_id=session_id,
        task=task,
        policy=policy,
        active_contexts=[root],
        guard_floor=root.default_guard,
        pool=pool,
        ledger=ledger,
        risk_sim=simulator,
        clock=clock,
        on_event=on_event,
        writer=writer,
    )


def _drop_expired(session: Session, now: float) -> None:
    session.active_contexts = [a for a in session.active_contexts if not a.is_expired(now)]


def _tick_all(session: Session, now: float) -> None:
    kept: list[AuthorityContext] = []
    for alpha in session.active_contexts:
        ticked = tick(alpha, now)
        if ticked is not EXPIRED:
            kept.append(ticked)
    session.active_contexts = kept


def _inspection_clear(session: Session, action: NormalizedAction) -> bool:
    """A clean inspection record for the target's content discharges
    inspect-before-exec."""
    record = session.pool.records.get(action.target)
    if record is None:
        return False
    inspection = session.inspections.get(record.content_digest)
    return inspection is not None and inspection.clean


def run_inspection(session: Session, content: bytes) -> InspectionRecord:
    """Statically inspect script content and remember the verdict by digest."""
    digest = digest_of(content)
    record = session.risk_sim.inspect_script(content, digest, step=session.next_step)
    session.inspections[digest] = record
    return record


def _rationale(cov_reason: str, risk, sigma: SequenceRisk, outcome: Decision) -> str:
    parts = [cov_reason, f"risk {risk.label.label}"]
    if risk.tags:
        parts.append("tags: " + ", ".join(sorted(t.value for t in risk.tags)))
    if sigma.matched:
        parts.append("sequence: " + ", ".join(sigma.matched))
    parts.append(f"outcome {outcome.label}")
    return "; ".join(parts)


def check_action(session: Session, raw: RawToolCall) -> CheckResult:
    """Run the pipeline for one proposed action and return its disposition.

    The ledger entry for a step is written before the result is returned;
    deferred dispositions park the action in the pending queue.
    """
    if raw.session_id != session.session_id:
        raise MalformedCall(
            f"call for session {raw.session_id!r} checked against {session.session_id!r}"
        )
    if raw.step_index != session.next_step:
        raise StepGap(f"expected step {session.next_step}, got {raw.step_index}")
    return _run_pipeline(session, raw)


def _run_pipeline(session: Session, raw: RawToolCall) -> CheckResult:
    now = session.clock()
    _drop_expired(session, now)
    action = normalize(raw, session.policy.adapters, session.pool)
    rho = trust_summary(action, session.pool, session.policy.trust)
    inspection_clear = _inspection_clear(session, action)
    is_covered, cov_reason = covered_by_any(
        action, session.active_contexts, rho, inspection_clear
    )
    risk = session.risk_sim.assess(
        action, session.task, session.ledger.view(), tuple(session.active_contexts), rho
    )
    sigma = _candidate_sequence_risk(session, action, rho, risk)
    outcome = decide(
        is_covered,
        risk,
        sigma,
        session.guard_floor,
        action.capability,
        session.policy.overrides,
    )
    rationale = _rationale(cov_reason, risk, sigma, outcome)
    record = DecisionRecord(
        action=action,
        covered=is_covered,
        risk=risk,
        sequence_risk=sigma,
        target_trust=rho.target_trust,
        outcome=outcome,
        rationale=rationale,
    )
    step = session.next_step
    entry = LedgerEntry(
        step=step,
        record=record,
        authority_snapshot=tuple(a.summary() for a in session.active_contexts),
        trust=rho,
    )
    ledger_audit.append(session.ledger, entry)
    session.next_step += 1
    disposition = _DISPOSITIONS[outcome]
    if disposition in EXECUTING_DISPOSITIONS and not is_covered:
        raise AssertionError("uncovered action mapped to an executing disposition")
    action_id = None
    if disposition in (Disposition.DEFERRED_ASK, Disposition.DEFERRED_INSPECT):
        action_id = f"{session.session_id}:a{next(session._action_ids)}"
    elif disposition in (Disposition.STAGED_SANDBOX, Disposition.STAGED_QUARANTINE):
        entry.observed_effect = f"staged: {action.effect.summary}"
    result = CheckResult(record=record, disposition=disposition, action_id=action_id, step=step)
    if action_id is not None:
        session.pending[action_id] = PendingAction(action_id=action_id, raw=raw, result=result)
    _tick_all(session, now)
    if session.writer is not None:
        session.writer.sync(session.ledger, upto=len(session.ledger.entries) - 1)
    session.emit(_decision_event(session, entry, disposition))
    if action_id is not None:
        session.emit(_pending_event(session, result))
    return result


def _candidate_sequence_risk(
    session: Session, action: NormalizedAction, rho: TrustSummary, risk
) -> SequenceRisk:
    """Sequence risk as if this action were appended: only patterns the
    candidate completes escalate its decision."""
    placeholder = DecisionRecord(
        action=action,
        covered=False,
        risk=risk,
        sequence_risk=SequenceRisk.none(),
        target_trust=rho.target_trust,
        outcome=Decision.BLOCK,
        rationale="",
    )
    candidate = LedgerEntry(
        step=session.next_step,
        record=placeholder,
        authority_snapshot=(),
        trust=rho,
    )
    entries = list(session.ledger.entries) + [candidate]
    return ledger_audit.completion_risk(entries, session.policy.patterns)


def resolve_pending(
    session: Session,
    action_id: str,
    verdict: str,
    approver: Issuer,
    rationale: str = "",
) -> CheckResult:
    """Resolve a deferred action: approve_once mints a single-use consent
    grant scoped to exactly this capability and target and re-runs the
    pipeline; deny finalizes the action as rejected."""
    pending = session.pending.pop(action_id, None)
    if pending is None:
        raise UnknownPending(action_id)
    if not isinstance(approver, Issuer):
        raise InvalidApprover(f"approver must be a trusted authority channel, got {approver!r}")
    if verdict == "approve_once":
        if approver is not Issuer.EXPLICIT_CONSENT:
            raise InvalidApprover("approvals require the explicit_consent channel")
        action = pending.result.record.action
        if action.recipients:
            scope = tuple(f"={r}" for r in action.recipients)
        else:
            scope = (f"={action.target}" if action.target else "=",)
        consent = mint_task_authority(
            Issuer.EXPLICIT_CONSENT,
            session.session_id,
            GrantSpec(
                capabilities=frozenset({action.capability}),
                targets=scope,
                lifetime=Ttl.steps(1),
                fallback=Decision.BLOCK,
            ),
        )
        session.active_contexts.append(consent)
        rerun_raw = RawToolCall(
            session_id=pending.raw.session_id,
            step_index=session.next_step,
            tool_name=pending.raw.tool_name,
            arguments=pending.raw.arguments,
            substrate=pending.raw.substrate,
        )
        result = _run_pipeline(session, rerun_raw)
        session.emit(_resolved_event(session, action_id, "approve_once", result.record.outcome))
        return result
    if verdict == "deny":
        original = pending.result.record
        note = rationale or "ask denied by operator"
        sigma = SequenceRisk.none()
        record = DecisionRecord(
            action=original.action,
            covered=original.covered,
            risk=original.risk,
            sequence_risk=sigma,
            target_trust=original.target_trust,
            outcome=Decision.BLOCK,
            rationale=f"{note}; outcome block",
        )
        step = session.next_step
        entry = LedgerEntry(
            step=step,
            record=record,
            authority_snapshot=tuple(a.summary() for a in session.active_contexts),
            trust=session.ledger.entries[pending.result.step].trust,
        )
        ledger_audit.append(session.ledger, entry)
        session.next_step += 1
        if session.writer is not None:
            session.writer.sync(session.ledger, upto=len(session.ledger.entries) - 1)
        result = CheckResult(
            record=record, disposition=Disposition.REJECTED, action_id=None, step=step
        )
        session.emit(_decision_event(session, entry, Disposition.REJECTED))
        session.emit(_resolved_event(session, action_id, "deny", Decision.BLOCK))
        return result
    raise ValueError(f"unknown verdict {verdict!r}")


def record_tool_output(session: Session, raw: RawToolCall, output: Union[bytes, str]) -> str:
    """Record an executed action's observed effect: redact secret-shaped
    values, label the output as a tool-output resource, and store the
    observation for later influence attribution."""
    entry = _entry_for(session, raw)
    if entry is None:
        raise MalformedCall(f"no ledger entry for {raw.tool_name} at step {raw.step_index}")
    if entry.record.outcome not in (Decision.ALLOW, Decision.AUDIT):
        raise MalformedCall(
            f"output recorded for non-executed action (outcome {entry.record.outcome.label})"
        )
    text = output.decode("utf-8", errors="replace") if isinstance(output, bytes) else output
    redacted = redact(text)
    entry.observed_effect = redacted
    action = entry.record.action
    origin = action.target or f"tool:{raw.tool_name}"
    digest = digest_of(redacted.encode("utf-8"))
    session.pool.label_resource(
        origin=origin,
        channel=ProvenanceLabel.TOOL_OUTPUT,
        content_digest=digest,
        step=entry.step,
        content=redacted,
    )
    ledger_audit.record_observation(
        session.ledger,
        ObservationRecord(
            step=entry.step,
            channel=ProvenanceLabel.TOOL_OUTPUT,
            resource_id=origin,
            content_digest=digest,
        ),
        session.pool,
    )
    return redacted


def _entry_for(session: Session, raw: RawToolCall) -> Optional[LedgerEntry]:
    for entry in reversed(session.ledger.entries):
        if entry.record.action.raw is raw:
            return entry
    for entry in reversed(session.ledger.entries):
        if entry.step == raw.step_index:
            return entry
    return None


_REDACTION_RES = [re.compile(p) for p in REDACTION_SIGNATURES]


def redact(text: str) -> str:
    for pattern in _REDACTION_RES:
        text = pattern.sub(REDACTION_MARKER, text)
    return text


def _decision_event(session: Session, entry: LedgerEntry, disposition: Disposition) -> dict:
    payload = ledger_audit.entry_to_json(entry)
    payload["disposition"] = disposition.value
    return {"type": "decision", "session_id": session.session_id, "step": entry.step, "record": payload}


def _pending_event(session: Session, result: CheckResult) -> dict:
    action = result.record.action
    return {
        "type": "pending",
        "session_id": session.session_id,
        "action_id": result.action_id,
        "step": result.step,
        "action": {
            "capability": action.capability.value,
            "target": action.target,
            "effect_summary": action.effect.summary,
            "tool_name": action.raw.tool_name,
        },
        "risk": {
            "label": result.record.risk.label.label,
            "tags": sorted(t.value for t in result.record.risk.tags),
            "rationale": result.record.risk.rationale,
        },
        "outcome": result.record.outcome.label,
    }


def _resolved_event(session: Session, action_id: str, verdict: str, outcome: Decision) -> dict:
    return {
        "type": "resolved",
        "session_id": session.session_id,
        "action_id": action_id,
        "verdict": verdict,
        "outcome": outcome.label,
    }
