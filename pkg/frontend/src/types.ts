/**
 * Wire types for the guard proxy's admin endpoint.
 *
 * Every rendered field comes from the proxy's decision records; the
 * console adds presentation state, never interpretation.
 */

export type EnforcementTier =
  | 'allow'
  | 'audit'
  | 'ask'
  | 'inspect'
  | 'sandbox'
  | 'quarantine'
  | 'block';

export interface ActionSummary {
  capability: string;
  target: string;
  effect_summary: string;
  tool_name: string;
}

export interface RiskSummary {
  label: 'low' | 'ambiguous' | 'high';
  tags: string[];
  rationale: string;
}

/** One row of the per-session decision ledger, as serialized by the proxy. */
export interface DecisionEvent {
  type: 'decision';
  session_id: string;
  step: number;
  record: {
    action: {
      capability: string;
      target: string;
      tool_name: string;
      effect: { kind: string; summary: string; reversible: boolean };
      influencing_resource: string | null;
    };
    covered: boolean;
    risk: { label: string; tags: string[]; source: string; rationale: string };
    sequence_risk: { level: string; matched: string[] };
    target_trust: string;
    outcome: EnforcementTier;
    rationale: string;
    observed_effect: string | null;
    disposition: string;
  };
}

export interface PendingEvent {
  type: 'pending';
  session_id: string;
  action_id: string;
  step: number;
  action: ActionSummary;
  risk: RiskSummary;
  outcome: EnforcementTier;
  ask_timeout_secs?: number;
}

export interface ResolvedEvent {
  type: 'resolved';
  session_id: string;
  action_id: string;
  verdict: 'approve_once' | 'deny';
  outcome: EnforcementTier;
}

export type FeedEvent = DecisionEvent | PendingEvent | ResolvedEvent;

/** A feed event together with its resumable stream sequence number. */
export interface SequencedEvent {
  seq: number;
  event: FeedEvent;
}

export type Verdict = 'approve_once' | 'deny';

export type CardState =
  | 'open'
  | 'submitting'
  | 'approved'
  | 'denied'
  | 'timed_out'
  | 'already_resolved';

/** Presentation state for one held action awaiting the operator. */
export interface PendingCard {
  actionId: string;
  sessionId: string;
  step: number;
  action: ActionSummary;
  risk: RiskSummary;
  receivedAt: number;
  expiresAt: number | null;
  state: CardState;
  finalOutcome: EnforcementTier | null;
}

export interface LedgerRow {
  sessionId: string;
  step: number;
  capability: string;
  target: string;
  covered: boolean;
  riskLabel: string;
  riskTags: string[];
  outcome: EnforcementTier;
  rationale: string;
}

export interface LedgerFilter {
  sessionId?: string;
  capability?: string;
  outcome?: string;
  onlyUncovered?: boolean;
}
