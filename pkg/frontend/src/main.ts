/**
 * Browser bootstrap: token form, feed subscription with resume, render
 * loop, and click delegation for approve/deny. The token lives in memory
 * only; a rejected token shows the blocking banner and disables actions.
 */

import { AdminClient, Unauthorized } from './client.js';
import { ConsoleStore } from './store.js';
import { renderApp } from './view.js';
import type { LedgerFilter, Verdict } from './types.js';

const RECONNECT_DELAY_MS = 2000;

function mount(): void {
  const root = document.getElementById('app');
  const form = document.getElementById('login') as HTMLFormElement | null;
  if (!root || !form) throw new Error('console markup missing #app or #login');

  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const endpoint = (form.elements.namedItem('endpoint') as HTMLInputElement).value;
    const token = (form.elements.namedItem('token') as HTMLInputElement).value;
    form.hidden = true;
    start(root, endpoint, token);
  });
}

function start(root: HTMLElement, endpoint: string, token: string): void {
  const client = new AdminClient({ baseUrl: endpoint, token });
  const store = new ConsoleStore(client);
  const filter: LedgerFilter = {};

  const render = () => {
    root.innerHTML = renderApp(store, Date.now(), filter);
  };
  store.subscribe(render);

  const connect = () => {
    const handle = client.subscribe(
      store.cursor,
      (event) => {
        if (!store.connected) store.markConnected(true);
        store.apply(event);
      },
      (error) => {
        if (error instanceof Unauthorized) {
          store.markAuthFailed();
          return;
        }
        store.markConnected(false);
        setTimeout(connect, RECONNECT_DELAY_MS);
      },
    );
    void handle;
  };
  connect();

  // Countdown ticks and timeout sweeps share one timer.
  setInterval(() => {
    store.sweep();
    render();
  }, 1000);

  root.addEventListener('click', (event) => {
    const target = event.target as HTMLElement;
    const actionId = target.getAttribute('data-action-id');
    const verdict = target.getAttribute('data-verdict') as Verdict | null;
    if (actionId && verdict) void store.act(actionId, verdict);
  });

  root.addEventListener('change', (event) => {
    const target = event.target as HTMLElement;
    if (target.id === 'filter-session') {
      filter.sessionId = (target as HTMLSelectElement).value || undefined;
      render();
    } else if (target.id === 'filter-uncovered') {
      filter.onlyUncovered = (target as HTMLInputElement).checked;
      render();
    }
  });

  render();
}

if (typeof document !== 'undefined') {
  mount();
}
