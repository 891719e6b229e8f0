/**
 * AdminClient - transport layer for the guard proxy's admin endpoint.
 *
 * The event feed is server-sent events consumed through a streamed fetch
 * rather than EventSource, so the same client runs in the browser and in
 * node-based tests, and the bearer token can travel in a header.
 * Reconnection resumes from the last seen sequence number.
 */

import type { FeedEvent, SequencedEvent, Verdict } from './types.js';

export class Unauthorized extends Error {
  constructor() {
    super('Unauthorized');
    this.name = 'Unauthorized';
  }
}

export class AlreadyResolved extends Error {
  constructor(actionId: string) {
    super(`already resolved: ${actionId}`);
    this.name = 'AlreadyResolved';
  }
}

export interface ResolveResult {
  ok: boolean;
  action_id: string;
  verdict: Verdict;
}

export interface SubscribeHandle {
  close(): void;
  /** Resolves when the subscription loop exits (socket closed or aborted). */
  done: Promise<void>;
}

export interface AdminClientOptions {
  /** Base URL of the admin endpoint, e.g. http://127.0.0.1:8849 */
  baseUrl: string;
  token: string;
  fetchImpl?: typeof fetch;
}

/** Parse one SSE frame body ("id: ...\nevent: ...\ndata: ...") */
export function parseFrame(frame: string): SequencedEvent | null {
  let seq = 0;
  let data = '';
  for (const line of frame.split('\n')) {
    if (line.startsWith('id: ')) {
      seq = Number(line.slice(4).trim());
    } else if (line.startsWith('data: ')) {
      data += line.slice(6);
    }
    // "event:" duplicates the payload's type field; comments are ignored.
  }
  if (!data) return null;
  try {
    return { seq, event: JSON.parse(data) as FeedEvent };
  } catch {
    return null;
  }
}

/** Incremental splitter for an SSE byte stream; frames end on blank lines. */
export class FrameParser {
  private buffer = '';

  push(chunk: string): SequencedEvent[] {
    this.buffer += chunk.replace(/\r\n/g, '\n');
    const events: SequencedEvent[] = [];
    let index: number;
    while ((index = this.buffer.indexOf('\n\n')) !== -1) {
      const frame = this.buffer.slice(0, index);
      this.buffer = this.buffer.slice(index + 2);
      const parsed = parseFrame(frame);
      if (parsed) events.push(parsed);
    }
    return events;
  }
}

export class AdminClient {
  private readonly baseUrl: string;
  private readonly token: string;
  private readonly fetchImpl: typeof fetch;

  constructor(options: AdminClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/$/, '');
    this.token = options.token;
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    return { Authorization: `Bearer ${this.token}`, ...extra };
  }

  /**
   * Subscribe to the live feed from `after` (exclusive). Events are
   * delivered in sequence order; the handle's close() tears the stream
   * down.
   */
  subscribe(
    after: number,
    onEvent: (event: SequencedEvent) => void,
    onError?: (error: Error) => void,
  ): SubscribeHandle {
    const controller = new AbortController();
    const done = (async () => {
      try {
        const response = await this.fetchImpl(
          `${this.baseUrl}/events?after=${after}`,
          { headers: this.headers(), signal: controller.signal },
        );
        if (response.status === 401) throw new Unauthorized();
        if (!response.ok || !response.body) {
          throw new Error(`event stream failed: HTTP ${response.status}`);
        }
        const reader = response.body.getReader();
        const decoder = new TextDecoder();
        const parser = new FrameParser();
        for (;;) {
          const { value, done: eof } = await reader.read();
          if (eof) break;
          for (const event of parser.push(decoder.decode(value, { stream: true }))) {
            onEvent(event);
          }
        }
      } catch (error) {
        if (!controller.signal.aborted && onError) {
          onError(error instanceof Error ? error : new Error(String(error)));
        }
      }
    })();
    return { close: () => controller.abort(), done };
  }

  async resolve(actionId: string, verdict: Verdict): Promise<ResolveResult> {
    const response = await this.fetchImpl(`${this.baseUrl}/resolve`, {
      method: 'POST',
      headers: this.headers({ 'Content-Type': 'application/json' }),
      body: JSON.stringify({ action_id: actionId, verdict }),
    });
    if (response.status === 401) throw new Unauthorized();
    if (response.status === 409) throw new AlreadyResolved(actionId);
    if (response.status === 404) throw new AlreadyResolved(actionId);
    if (!response.ok) throw new Error(`resolve failed: HTTP ${response.status}`);
    return (await response.json()) as ResolveResult;
  }

  async pendingSnapshot(): Promise<unknown[]> {
    const response = await this.fetchImpl(`${this.baseUrl}/pending`, {
      headers: this.headers(),
    });
    if (response.status === 401) throw new Unauthorized();
    const body = (await response.json()) as { pending: unknown[] };
    return body.pending;
  }
}
