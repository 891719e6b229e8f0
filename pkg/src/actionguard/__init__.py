"""Pre-action authority guard for tool-using agents.

The guard sits between an agent and its tools. Observed content may
inform the agent; only the user task, trusted policy, or explicit
consent can authorize a side effect. Each proposed tool call is
normalized, checked against scoped authority and trust, risk-labeled,
enforced through a seven-tier decision lattice, and recorded in an
append-only ledger audited for cross-step attack sequences.
"""

from .action_model import (
    AdapterRule,
    AdapterTable,
    Capability,
    DuplicateRule,
    EffectKind,
    ExpectedEffect,
    MalformedCall,
    NormalizedAction,
    RawToolCall,
    Substrate,
    classify_unknown_tool,
    normalize,
    register_adapter,
)
from .authority import (
    EXPIRED,
    AuthorityContext,
    ExpansionAttempt,
    GrantSpec,
    InvalidFallback,
    Issuer,
    Ttl,
    covered,
    derive_step_authority,
    mint_task_authority,
    tick,
)
from .enforcement import Decision, DecisionRecord, compare, decide
from .guard_core import (
    CheckResult,
    Disposition,
    InvalidApprover,
    InvalidGrant,
    Session,
    TaskSpec,
    UnknownPending,
    check_action,
    open_session,
    record_tool_output,
    resolve_pending,
    run_inspection,
)
from .ledger_audit import (
    BUILTIN_PATTERNS,
    Ledger,
    LedgerEntry,
    ObservationRecord,
    SequencePattern,
    SequenceRisk,
    SequenceRiskLevel,
    StagePredicate,
    StepGap,
    append,
    completion_risk,
    record_observation,
    sequence_risk,
)
from .policy import Policy, PolicyError, default_policy, load_policy, parse_policy
from .risk_sim import (
    InspectionRecord,
    OracleTimeout,
    RiskAssessment,
    RiskLabel,
    RiskSimulator,
    RiskSource,
    RiskTag,
)
from .trust_pool import (
    Constraint,
    ProvenanceLabel,
    ResourceRecord,
    TargetTrustPolicy,
    TrustPool,
    TrustSummary,
    TrustTier,
    UnknownResource,
    target_trust,
    trust_summary,
)

__version__ = "0.1.0"
