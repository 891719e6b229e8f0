import { describe, expect, it } from 'vitest';

import { ConsoleStore } from '../src/store.js';
import { escapeHtml, renderApp, renderCard, renderLedgerPane } from '../src/view.js';
import type { PendingCard } from '../src/types.js';

function card(overrides: Partial<PendingCard> = {}): PendingCard {
  return {
    actionId: 'mcp-1:a1',
    sessionId: 'mcp-1',
    step: 2,
    action: {
      capability: 'SEND',
      target: 'review@corp.example',
      effect_summary: 'transmit',
      tool_name: 'send_email',
    },
    risk: { label: 'ambiguous', tags: ['hidden_recipient'], rationale: 'suggested by tool output' },
    receivedAt: 0,
    expiresAt: 120_000,
    state: 'open',
    finalOutcome: null,
    ...overrides,
  };
}

describe('renderCard', () => {
  it('shows capability, target, risk tags, and live countdown', () => {
    const html = renderCard(card(), 30_000);
    expect(html).toContain('SEND');
    expect(html).toContain('review@corp.example');
    expect(html).toContain('hidden_recipient');
    expect(html).toContain('90s');
    expect(html).toContain('data-verdict="approve_once"');
    expect(html).toContain('data-verdict="deny"');
  });

  it('settled cards lose their buttons and show the terminal state', () => {
    const html = renderCard(card({ state: 'already_resolved' }), 0);
    expect(html).not.toContain('data-verdict');
    expect(html).toContain('AlreadyResolved');
  });

  it('escapes attacker-controlled strings', () => {
    const hostile = card({
      action: {
        capability: 'SEND',
        target: '<script>alert(1)</script>',
        effect_summary: '',
        tool_name: 'send_email',
      },
    });
    const html = renderCard(hostile, 0);
    expect(html).not.toContain('<script>alert');
    expect(html).toContain('&lt;script&gt;');
  });
});

describe('renderLedgerPane', () => {
  it('renders rows in step order with coverage styling', () => {
    const store = new ConsoleStore();
    store.apply({
      seq: 1,
      event: {
        type: 'decision',
        session_id: 'mcp-1',
        step: 0,
        record: {
          action: {
            capability: 'READ',
            target: '/workspace',
            tool_name: 'read_file',
            effect: { kind: 'observe', summary: 'observe', reversible: true },
            influencing_resource: null,
          },
          covered: false,
          risk: { label: 'low', tags: [], source: 'rules', rationale: 'r' },
          sequence_risk: { level: 'low', matched: [] },
          target_trust: 'T2_HIGH',
          outcome: 'inspect',
          rationale: 'target outside granted scope',
          observed_effect: null,
          disposition: 'deferred_inspect',
        },
      },
    });
    const html = renderLedgerPane(store);
    expect(html).toContain('class="uncovered outcome-inspect"');
    expect(html).toContain('<option value="mcp-1">');
  });
});

describe('renderApp banners', () => {
  it('blocks on auth failure', () => {
    const store = new ConsoleStore();
    store.markAuthFailed();
    expect(renderApp(store, 0)).toContain('Unauthorized');
  });

  it('warns while disconnected', () => {
    const store = new ConsoleStore();
    expect(renderApp(store, 0)).toContain('reconnecting');
  });
});

describe('escapeHtml', () => {
  it('escapes the dangerous four', () => {
    expect(escapeHtml('<a href="x">&</a>')).toBe('&lt;a href=&quot;x&quot;&gt;&amp;&lt;/a&gt;');
  });
});
