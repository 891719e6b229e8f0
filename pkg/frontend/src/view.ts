/**
 * Render functions: store state in, HTML strings out. No DOM dependency,
 * so everything here is testable in plain node; main.ts mounts the
 * strings and wires delegation.
 */

import type { ConsoleStore } from './store.js';
import { countdownSecs, stateLabel } from './store.js';
import type { LedgerFilter, LedgerRow, PendingCard } from './types.js';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

function riskBadge(label: string): string {
  return `<span class="badge risk-${escapeHtml(label)}">${escapeHtml(label)}</span>`;
}

function tagChips(tags: string[]): string {
  if (!tags.length) return '';
  return tags
    .map((tag) => `<span class="chip tag-${escapeHtml(tag)}">${escapeHtml(tag)}</span>`)
    .join(' ');
}

export function renderCard(card: PendingCard, nowMs: number): string {
  const remaining = countdownSecs(card, nowMs);
  const countdown =
    card.state === 'open' && remaining !== null
      ? `<span class="countdown" data-expires="${card.expiresAt}">${remaining}s</span>`
      : '';
  const actionable = card.state === 'open';
  const buttons = actionable
    ? `<button class="approve" data-action-id="${escapeHtml(card.actionId)}" data-verdict="approve_once">approve once</button>
       <button class="deny" data-action-id="${escapeHtml(card.actionId)}" data-verdict="deny">deny</button>`
    : `<span class="state state-${card.state}">${escapeHtml(stateLabel(card.state))}</span>`;
  return `<article class="card card-${card.state}" data-card="${escapeHtml(card.actionId)}">
  <header>
    <code>${escapeHtml(card.action.capability)}</code>
    <span class="target">${escapeHtml(card.action.target || '(no target)')}</span>
    ${countdown}
  </header>
  <div class="meta">
    <span>session ${escapeHtml(card.sessionId)} · step ${card.step} · ${escapeHtml(card.action.tool_name)}</span>
    ${riskBadge(card.risk.label)} ${tagChips(card.risk.tags)}
  </div>
  <p class="rationale">${escapeHtml(card.risk.rationale)}</p>
  <footer>${buttons}</footer>
</article>`;
}

export function renderPendingPane(store: ConsoleStore, nowMs: number): string {
  const open = store.openCards();
  const settled = store.settledCards().slice(-8).reverse();
  const openHtml = open.length
    ? open.map((card) => renderCard(card, nowMs)).join('\n')
    : '<p class="empty">Nothing waiting for approval.</p>';
  const settledHtml = settled.map((card) => renderCard(card, nowMs)).join('\n');
  return `<section id="pending">
  <h2>Pending approvals (${open.length})</h2>
  ${openHtml}
  ${settled.length ? `<h3>Recently settled</h3>${settledHtml}` : ''}
</section>`;
}

export function renderLedgerRow(row: LedgerRow): string {
  return `<tr class="${row.covered ? 'covered' : 'uncovered'} outcome-${row.outcome}">
  <td>${escapeHtml(row.sessionId)}</td>
  <td class="num">${row.step}</td>
  <td><code>${escapeHtml(row.capability)}</code></td>
  <td class="target">${escapeHtml(row.target || '—')}</td>
  <td>${row.covered ? 'yes' : 'no'}</td>
  <td>${riskBadge(row.riskLabel)} ${tagChips(row.riskTags)}</td>
  <td class="outcome">${escapeHtml(row.outcome)}</td>
</tr>`;
}

export function renderLedgerPane(store: ConsoleStore, filter: LedgerFilter = {}): string {
  const rows = store.ledger(filter);
  const sessions = store.sessions();
  const options = ['<option value="">all sessions</option>']
    .concat(
      sessions.map(
        (s) =>
          `<option value="${escapeHtml(s)}"${filter.sessionId === s ? ' selected' : ''}>${escapeHtml(s)}</option>`,
      ),
    )
    .join('');
  const body = rows.length
    ? rows.map(renderLedgerRow).join('\n')
    : '<tr><td colspan="7" class="empty">No decisions yet.</td></tr>';
  return `<section id="ledger">
  <h2>Decision ledger (${rows.length})</h2>
  <div class="filters">
    <select id="filter-session">${options}</select>
    <label><input type="checkbox" id="filter-uncovered"${filter.onlyUncovered ? ' checked' : ''}/> uncovered only</label>
  </div>
  <table>
    <thead>
      <tr><th>session</th><th>step</th><th>capability</th><th>target</th>
          <th>covered</th><th>risk</th><th>outcome</th></tr>
    </thead>
    <tbody>${body}</tbody>
  </table>
</section>`;
}

export function renderBanner(store: ConsoleStore): string {
  if (store.authFailed) {
    return '<div class="banner banner-error">Unauthorized: the admin token was rejected. Approvals are disabled.</div>';
  }
  if (!store.connected) {
    return '<div class="banner banner-warn">Disconnected from the decision feed; reconnecting…</div>';
  }
  if (store.lastError) {
    return `<div class="banner banner-warn">${escapeHtml(store.lastError)}</div>`;
  }
  return '';
}

export function renderApp(store: ConsoleStore, nowMs: number, filter: LedgerFilter = {}): string {
  return `${renderBanner(store)}
<main>
  ${renderPendingPane(store, nowMs)}
  ${renderLedgerPane(store, filter)}
</main>`;
}
