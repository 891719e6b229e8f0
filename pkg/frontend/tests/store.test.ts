import { describe, expect, it, vi } from 'vitest';

import { AdminClient, AlreadyResolved, FrameParser, parseFrame } from '../src/client.js';
import { ConsoleStore, countdownSecs, stateLabel } from '../src/store.js';
import type { DecisionEvent, PendingEvent, ResolvedEvent } from '../src/types.js';

function pendingEvent(overrides: Partial<PendingEvent> = {}): PendingEvent {
  return {
    type: 'pending',
    session_id: 'mcp-1',
    action_id: 'mcp-1:a1',
    step: 3,
    action: {
      capability: 'SEND',
      target: 'review@corp.example',
      effect_summary: 'transmit',
      tool_name: 'send_email',
    },
    risk: { label: 'ambiguous', tags: ['hidden_recipient'], rationale: 'low-trust suggestion' },
    outcome: 'ask',
    ask_timeout_secs: 120,
    ...overrides,
  };
}

function decisionEvent(step: number, outcome = 'allow'): DecisionEvent {
  return {
    type: 'decision',
    session_id: 'mcp-1',
    step,
    record: {
      action: {
        capability: 'READ',
        target: `/workspace/f${step}.md`,
        tool_name: 'read_file',
        effect: { kind: 'observe', summary: 'observe', reversible: true },
        influencing_resource: null,
      },
      covered: outcome !== 'block',
      risk: { label: 'low', tags: [], source: 'rules', rationale: 'routine' },
      sequence_risk: { level: 'low', matched: [] },
      target_trust: 'T2_HIGH',
      outcome: outcome as DecisionEvent['record']['outcome'],
      rationale: 'covered; risk low',
      observed_effect: null,
      disposition: 'execute',
    },
  };
}

function resolvedEvent(verdict: 'approve_once' | 'deny'): ResolvedEvent {
  return {
    type: 'resolved',
    session_id: 'mcp-1',
    action_id: 'mcp-1:a1',
    verdict,
    outcome: verdict === 'approve_once' ? 'audit' : 'block',
  };
}

function clientStub(impl: Partial<AdminClient> = {}): AdminClient {
  return { resolve: vi.fn(async () => ({ ok: true })), ...impl } as unknown as AdminClient;
}

describe('ConsoleStore feed application', () => {
  it('turns a pending event into an open card with a countdown deadline', () => {
    const store = new ConsoleStore(null, () => 10_000);
    store.apply({ seq: 1, event: pendingEvent() });
    expect(store.openCards()).toHaveLength(1);
    const card = store.cards[0];
    expect(card.state).toBe('open');
    expect(card.expiresAt).toBe(10_000 + 120_000);
    expect(countdownSecs(card, 40_000)).toBe(90);
    expect(countdownSecs(card, 999_999_999)).toBe(0);
  });

  it('ignores replayed sequence numbers after reconnect', () => {
    const store = new ConsoleStore();
    store.apply({ seq: 5, event: pendingEvent() });
    store.apply({ seq: 5, event: pendingEvent({ action_id: 'dup' }) });
    expect(store.cards).toHaveLength(1);
    expect(store.cursor).toBe(5);
  });

  it('keeps ledger rows in step order per session', () => {
    const store = new ConsoleStore();
    store.apply({ seq: 1, event: decisionEvent(1) });
    store.apply({ seq: 2, event: decisionEvent(0, 'block') });
    store.apply({
      seq: 3,
      event: { ...decisionEvent(0), session_id: 'mcp-2' } as DecisionEvent,
    });
    const rows = store.ledger();
    expect(rows.map((r) => [r.sessionId, r.step])).toEqual([
      ['mcp-1', 0],
      ['mcp-1', 1],
      ['mcp-2', 0],
    ]);
  });

  it('filters the ledger by session, capability, outcome, coverage', () => {
    const store = new ConsoleStore();
    store.apply({ seq: 1, event: decisionEvent(0) });
    store.apply({ seq: 2, event: decisionEvent(1, 'block') });
    expect(store.ledger({ onlyUncovered: true })).toHaveLength(1);
    expect(store.ledger({ outcome: 'block' })).toHaveLength(1);
    expect(store.ledger({ sessionId: 'mcp-9' })).toHaveLength(0);
    expect(store.ledger({ capability: 'READ' })).toHaveLength(2);
  });

  it('resolved events settle the matching card', () => {
    const store = new ConsoleStore();
    store.apply({ seq: 1, event: pendingEvent() });
    store.apply({ seq: 2, event: resolvedEvent('deny') });
    expect(store.cards[0].state).toBe('denied');
    expect(store.cards[0].finalOutcome).toBe('block');
    expect(store.openCards()).toHaveLength(0);
  });
});

describe('operator actions', () => {
  it('double submit is idempotent: second act is a no-op while in flight', async () => {
    let resolves = 0;
    const client = clientStub({
      resolve: vi.fn(async () => {
        resolves += 1;
        return { ok: true, action_id: 'mcp-1:a1', verdict: 'approve_once' as const };
      }),
    });
    const store = new ConsoleStore(client);
    store.apply({ seq: 1, event: pendingEvent() });
    await Promise.all([
      store.act('mcp-1:a1', 'approve_once'),
      store.act('mcp-1:a1', 'approve_once'),
    ]);
    expect(resolves).toBe(1);
    expect(store.cards[0].state).toBe('submitting');
    store.apply({ seq: 2, event: resolvedEvent('approve_once') });
    expect(store.cards[0].state).toBe('approved');
  });

  it('acting on a settled card renders AlreadyResolved rather than throwing', async () => {
    const client = clientStub({
      resolve: vi.fn(async () => {
        throw new AlreadyResolved('mcp-1:a1');
      }),
    });
    const store = new ConsoleStore(client);
    store.apply({ seq: 1, event: pendingEvent() });
    await store.act('mcp-1:a1', 'deny');
    expect(store.cards[0].state).toBe('already_resolved');
    expect(stateLabel(store.cards[0].state)).toBe('AlreadyResolved');
  });

  it('network failures reopen the card and surface the error', async () => {
    const client = clientStub({
      resolve: vi.fn(async () => {
        throw new Error('connection refused');
      }),
    });
    const store = new ConsoleStore(client);
    store.apply({ seq: 1, event: pendingEvent() });
    await store.act('mcp-1:a1', 'deny');
    expect(store.cards[0].state).toBe('open');
    expect(store.lastError).toContain('connection refused');
  });

  it('sweep times out open cards exactly at their deadline', () => {
    const store = new ConsoleStore(null, () => 0);
    store.apply({ seq: 1, event: pendingEvent({ ask_timeout_secs: 2 }) });
    store.sweep(1999);
    expect(store.cards[0].state).toBe('open');
    store.sweep(2000);
    expect(store.cards[0].state).toBe('timed_out');
  });
});

describe('SSE frame parsing', () => {
  it('parses a full frame', () => {
    const parsed = parseFrame('id: 12\nevent: pending\ndata: {"type":"pending"}');
    expect(parsed?.seq).toBe(12);
    expect(parsed?.event.type).toBe('pending');
  });

  it('skips keepalive comments and splits chunk boundaries', () => {
    const parser = new FrameParser();
    expect(parser.push(': keepalive\n\nid: 1\nevent: decision\n')).toHaveLength(0);
    const events = parser.push('data: {"type":"decision"}\n\nid: 2\ndata: {"type":"resolved"}\n\n');
    expect(events.map((e) => e.seq)).toEqual([1, 2]);
  });

  it('tolerates malformed JSON frames', () => {
    const parser = new FrameParser();
    expect(parser.push('id: 3\ndata: {notjson\n\n')).toHaveLength(0);
  });
});
