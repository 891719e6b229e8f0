/**
 * ConsoleStore - the console's entire mutable state.
 *
 * Applies feed events in arrival order, keeps the resume cursor, owns
 * the pending-card lifecycle (open -> submitting -> terminal), and keeps
 * ledger rows per session in step order. Views render from this store;
 * the server's acknowledgments are the only source of truth for
 * terminal states.
 */

import { AdminClient, AlreadyResolved } from './client.js';
import type {
  CardState,
  DecisionEvent,
  LedgerFilter,
  LedgerRow,
  PendingCard,
  PendingEvent,
  ResolvedEvent,
  SequencedEvent,
  Verdict,
} from './types.js';

export type Listener = () => void;

export class ConsoleStore {
  cursor = 0;
  cards: PendingCard[] = [];
  rows: LedgerRow[] = [];
  connected = false;
  authFailed = false;
  lastError: string | null = null;

  private listeners: Listener[] = [];
  private readonly now: () => number;

  constructor(
    private readonly client: AdminClient | null = null,
    now: () => number = () => Date.now(),
  ) {
    this.now = now;
  }

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  // ----- feed application -----

  apply(sequenced: SequencedEvent): void {
    if (sequenced.seq <= this.cursor) return; // replayed on reconnect
    this.cursor = sequenced.seq;
    const event = sequenced.event;
    switch (event.type) {
      case 'pending':
        this.applyPending(event);
        break;
      case 'decision':
        this.applyDecision(event);
        break;
      case 'resolved':
        this.applyResolved(event);
        break;
    }
    this.notify();
  }

  private applyPending(event: PendingEvent): void {
    if (this.cards.some((c) => c.actionId === event.action_id)) return;
    const receivedAt = this.now();
    this.cards.push({
      actionId: event.action_id,
      sessionId: event.session_id,
      step: event.step,
      action: event.action,
      risk: event.risk,
      receivedAt,
      expiresAt:
        event.ask_timeout_secs != null ? receivedAt + event.ask_timeout_secs * 1000 : null,
      state: 'open',
      finalOutcome: null,
    });
  }

  private applyDecision(event: DecisionEvent): void {
    const record = event.record;
    this.rows.push({
      sessionId: event.session_id,
      step: event.step,
      capability: record.action.capability,
      target: record.action.target,
      covered: record.covered,
      riskLabel: record.risk.label,
      riskTags: record.risk.tags,
      outcome: record.outcome,
      rationale: record.rationale,
    });
  }

  private applyResolved(event: ResolvedEvent): void {
    const card = this.cards.find((c) => c.actionId === event.action_id);
    if (!card) return;
    card.finalOutcome = event.outcome;
    if (card.state === 'open' || card.state === 'submitting') {
      card.state = event.verdict === 'approve_once' ? 'approved' : 'denied';
    }
  }

  // ----- operator actions -----

  /**
   * Approve or deny a card. Double submits are no-ops while a verdict is
   * in flight; a card the server already settled renders AlreadyResolved
   * instead of throwing.
   */
  async act(actionId: string, verdict: Verdict): Promise<void> {
    const card = this.cards.find((c) => c.actionId === actionId);
    if (!card || card.state !== 'open') return;
    if (this.client === null) throw new Error('store has no client attached');
    card.state = 'submitting';
    this.notify();
    try {
      await this.client.resolve(actionId, verdict);
      // Terminal state lands via the resolved feed event; keep submitting
      // until it does unless the feed already beat us to it.
    } catch (error) {
      if (error instanceof AlreadyResolved) {
        card.state = 'already_resolved';
      } else {
        card.state = 'open';
        this.lastError = error instanceof Error ? error.message : String(error);
      }
      this.notify();
    }
  }

  /** Countdown housekeeping: expire open cards whose hold window passed. */
  sweep(nowMs?: number): void {
    const now = nowMs ?? this.now();
    let changed = false;
    for (const card of this.cards) {
      if (card.state === 'open' && card.expiresAt !== null && now >= card.expiresAt) {
        card.state = 'timed_out';
        changed = true;
      }
    }
    if (changed) this.notify();
  }

  // ----- queries -----

  openCards(): PendingCard[] {
    return this.cards.filter((c) => c.state === 'open' || c.state === 'submitting');
  }

  settledCards(): PendingCard[] {
    return this.cards.filter((c) => c.state !== 'open' && c.state !== 'submitting');
  }

  cardById(actionId: string): PendingCard | undefined {
    return this.cards.find((c) => c.actionId === actionId);
  }

  /** Ledger rows, filterable, always in step order per session. */
  ledger(filter: LedgerFilter = {}): LedgerRow[] {
    return this.rows
      .filter((row) => {
        if (filter.sessionId && row.sessionId !== filter.sessionId) return false;
        if (filter.capability && row.capability !== filter.capability) return false;
        if (filter.outcome && row.outcome !== filter.outcome) return false;
        if (filter.onlyUncovered && row.covered) return false;
        return true;
      })
      .sort((a, b) =>
        a.sessionId === b.sessionId
          ? a.step - b.step
          : a.sessionId.localeCompare(b.sessionId),
      );
  }

  sessions(): string[] {
    return [...new Set(this.rows.map((r) => r.sessionId))].sort();
  }

  markConnected(connected: boolean): void {
    this.connected = connected;
    this.notify();
  }

  markAuthFailed(): void {
    this.authFailed = true;
    this.connected = false;
    this.notify();
  }
}

/** Remaining hold time of a card in whole seconds, never negative. */
export function countdownSecs(card: PendingCard, nowMs: number): number | null {
  if (card.expiresAt === null) return null;
  return Math.max(0, Math.ceil((card.expiresAt - nowMs) / 1000));
}

export function stateLabel(state: CardState): string {
  switch (state) {
    case 'open':
      return 'awaiting decision';
    case 'submitting':
      return 'submitting…';
    case 'approved':
      return 'approved (ran once)';
    case 'denied':
      return 'denied';
    case 'timed_out':
      return 'timed out (denied)';
    case 'already_resolved':
      return 'AlreadyResolved';
  }
}
