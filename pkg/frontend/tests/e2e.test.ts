/**
 * End-to-end console loop against a real proxy with a mock upstream:
 * a deferred send surfaces as a pending card; approve-once executes it
 * exactly once (an identical retry is re-deferred); deny finalizes
 * rejection; a timed-out card renders AlreadyResolved when acted on.
 */

import { type ChildProcess, spawn } from 'node:child_process';
import net from 'node:net';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { AdminClient } from '../src/client.js';
import { ConsoleStore } from '../src/store.js';
import { renderCard, renderPendingPane } from '../src/view.js';
import type { PendingCard } from '../src/types.js';

const TOKEN = 'e2e-token';
const ASK_TIMEOUT_SECS = 2.0;

let proxy: ChildProcess;
let toolPort = 0;
let adminPort = 0;

/** Minimal scripted agent speaking line-delimited JSON-RPC to the proxy. */
class AgentClient {
  private socket!: net.Socket;
  private buffer = '';
  private waiters: Array<(line: string) => void> = [];
  private nextId = 1;

  async connect(port: number): Promise<void> {
    this.socket = net.connect(port, '127.0.0.1');
    this.socket.on('data', (chunk) => {
      this.buffer += chunk.toString('utf-8');
      let index: number;
      while ((index = this.buffer.indexOf('\n')) !== -1) {
        const line = this.buffer.slice(0, index);
        this.buffer = this.buffer.slice(index + 1);
        const waiter = this.waiters.shift();
        if (waiter) waiter(line);
      }
    });
    await new Promise<void>((resolve, reject) => {
      this.socket.once('connect', () => resolve());
      this.socket.once('error', reject);
    });
  }

  call(method: string, params: unknown): Promise<Record<string, any>> {
    const id = this.nextId++;
    const line = JSON.stringify({ jsonrpc: '2.0', id, method, params });
    const reply = new Promise<string>((resolve) => this.waiters.push(resolve));
    this.socket.write(line + '\n');
    return reply.then((text) => JSON.parse(text));
  }

  toolCall(name: string, args: Record<string, unknown>): Promise<Record<string, any>> {
    return this.call('tools/call', { name, arguments: args });
  }

  close(): void {
    this.socket.destroy();
  }
}

async function waitFor<T>(
  probe: () => T | undefined,
  what: string,
  timeoutMs = 8000,
): Promise<T> {
  const start = Date.now();
  for (;;) {
    const value = probe();
    if (value !== undefined) return value;
    if (Date.now() - start > timeoutMs) throw new Error(`timed out waiting for ${what}`);
    await new Promise((resolve) => setTimeout(resolve, 25));
  }
}

beforeAll(async () => {
  proxy = spawn(
    'python3',
    ['tests/helpers/run_proxy.py', String(ASK_TIMEOUT_SECS), TOKEN],
    { stdio: ['pipe', 'pipe', 'inherit'] },
  );
  const ports = await new Promise<{ tool_port: number; admin_port: number }>(
    (resolve, reject) => {
      let out = '';
      proxy.stdout!.on('data', (chunk) => {
        out += chunk.toString();
        const line = out.split('\n')[0];
        if (line) resolve(JSON.parse(line));
      });
      proxy.once('exit', (code) => reject(new Error(`proxy exited early: ${code}`)));
      setTimeout(() => reject(new Error('proxy startup timeout')), 15000);
    },
  );
  toolPort = ports.tool_port;
  adminPort = ports.admin_port;
}, 20000);

afterAll(() => {
  proxy?.stdin?.end();
  proxy?.kill();
});

describe('console loop against the live proxy', () => {
  it('approve-once runs the held send exactly once; deny and timeout finalize', async () => {
    const agent = new AgentClient();
    await agent.connect(toolPort);

    // The task grants mail to corp addresses but never names the
    // recipient; the recipient arrives via a tool output, so the send is
    // covered but ambiguous and must wait for an operator.
    const setTask = await agent.call('guard/set_task', {
      task_text: 'Read the inbox note and act on it.',
      grant: {
        capabilities: ['READ', 'SEND', 'RESPOND'],
        scope: ['/workspace/**', '*@corp.example'],
      },
    });
    expect(setTask.result.session_id).toBeDefined();

    const read = await agent.toolCall('read_file', { path: '/workspace/inbox.txt' });
    expect(read.result.content[0].text).toContain('review@corp.example');

    // Console side: subscribe to the admin feed.
    const client = new AdminClient({ baseUrl: `http://127.0.0.1:${adminPort}`, token: TOKEN });
    const store = new ConsoleStore(client);
    const feed = client.subscribe(0, (event) => store.apply(event));

    // 1) The deferred send surfaces as a pending card.
    const sendPromise = agent.toolCall('send_email', {
      to: ['review@corp.example'],
      body: 'final report',
    });
    const card = await waitFor<PendingCard | undefined>(
      () => store.openCards()[0],
      'pending card',
    );
    expect(card.action.capability).toBe('SEND');
    expect(card.action.target).toBe('review@corp.example');
    expect(renderPendingPane(store, Date.now())).toContain('approve once');

    // 2) approve_once releases it; the agent sees a result.
    await store.act(card.actionId, 'approve_once');
    const sendReply = await sendPromise;
    expect(sendReply.result).toEqual({ sent: true });
    await waitFor(
      () => (store.cardById(card.actionId)?.state === 'approved' ? true : undefined),
      'approved card state',
    );

    // 3) An identical send is re-deferred: the single-use grant is spent.
    const repeatPromise = agent.toolCall('send_email', {
      to: ['review@corp.example'],
      body: 'final report',
    });
    const repeatCard = await waitFor<PendingCard | undefined>(
      () => store.openCards()[0],
      'second pending card',
    );
    expect(repeatCard.actionId).not.toBe(card.actionId);

    // Deny finalizes the rejection end to end.
    await store.act(repeatCard.actionId, 'deny');
    const repeatReply = await repeatPromise;
    expect(repeatReply.error.data.outcome).toBe('block');
    await waitFor(
      () => (store.cardById(repeatCard.actionId)?.state === 'denied' ? true : undefined),
      'denied card state',
    );
    const deniedRow = store
      .ledger({ outcome: 'block' })
      .find((row) => row.capability === 'SEND');
    expect(deniedRow).toBeDefined();

    // 4) A held send that nobody resolves times out to deny; an operator
    //    whose feed lagged (closed here) then acts on the stale card and
    //    gets AlreadyResolved back.
    const timeoutPromise = agent.toolCall('send_email', {
      to: ['review@corp.example'],
      body: 'third attempt',
    });
    const staleCard = await waitFor<PendingCard | undefined>(
      () => store.openCards()[0],
      'third pending card',
    );
    feed.close();
    const timeoutReply = await timeoutPromise; // proxy denies after the window
    expect(timeoutReply.error.data.outcome).toBe('block');
    await store.act(staleCard.actionId, 'deny');
    const stale = store.cardById(staleCard.actionId)!;
    expect(stale.state).toBe('already_resolved');
    expect(renderCard(stale, Date.now())).toContain('AlreadyResolved');

    // The local sweep also times out open cards once their window passes.
    store.sweep(Number.MAX_SAFE_INTEGER);

    agent.close();
  }, 30000);
});
