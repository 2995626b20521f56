// Gateway client. Every response body is an envelope carrying exactly
// one of payload or error; anything else is a broken transport and gets
// surfaced as such instead of being guessed at.

import type {
  ApplyPayload,
  ConfirmPayload,
  EventsPayload,
  FeedbackEventBody,
  FeedbackPayload,
  LogRecord,
  ProposalsPayload,
  SessionPayload,
  Stage,
  StagePayload,
  StyleRecord,
  TemplatesPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly requestId: string | null = null,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class EnvelopeError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "EnvelopeError";
  }
}

// A transport takes (path, init) and resolves to status plus decoded
// JSON body. Production wraps fetch; tests script it.
export type Transport = (path: string, init?: RequestInit) => Promise<{ status: number; body: unknown }>;

export function fetchTransport(baseUrl: string, fetchImpl: typeof fetch = fetch): Transport {
  const base = baseUrl.replace(/\/$/, "");
  return async (path, init) => {
    const res = await fetchImpl(base + path, {
      ...init,
      headers: { "content-type": "application/json", ...(init?.headers ?? {}) },
    });
    return { status: res.status, body: await res.json() };
  };
}

export function parseEnvelope<T>(status: number, body: unknown): T {
  if (typeof body !== "object" || body === null) {
    throw new EnvelopeError(`expected an envelope object, got ${typeof body}`);
  }
  const record = body as Record<string, unknown>;
  const hasPayload = "payload" in record;
  const hasError = "error" in record;
  if (hasPayload === hasError) {
    throw new EnvelopeError(
      hasPayload ? "envelope carries both payload and error" : "envelope carries neither payload nor error",
    );
  }
  const requestId = typeof record.request_id === "string" ? record.request_id : null;
  if (hasError) {
    const err = record.error as Record<string, unknown>;
    const code = typeof err?.code === "string" ? err.code : "unknown";
    const message = typeof err?.message === "string" ? err.message : "unexplained error";
    throw new ApiError(status, code, message, requestId);
  }
  return record.payload as T;
}

export class GatewayClient {
  constructor(private readonly transport: Transport) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
    }
    const { status, body: decoded } = await this.transport(path, init);
    return parseEnvelope<T>(status, decoded);
  }

  openSession(queryText: string, userId?: string, style?: StyleRecord): Promise<SessionPayload> {
    const body: Record<string, unknown> = { query_text: queryText };
    if (userId !== undefined) body.user_id = userId;
    if (style !== undefined) body.style = style;
    return this.call("POST", "/sessions", body);
  }

  getSession(sessionId: string): Promise<SessionPayload> {
    return this.call("GET", `/sessions/${encodeURIComponent(sessionId)}`);
  }

  getStage(sessionId: string, stage: Stage): Promise<StagePayload> {
    return this.call("GET", `/sessions/${encodeURIComponent(sessionId)}/stage/${stage}`);
  }

  submitFeedback(sessionId: string, event: FeedbackEventBody): Promise<FeedbackPayload> {
    return this.call("POST", `/sessions/${encodeURIComponent(sessionId)}/feedback`, event);
  }

  listProposals(sessionId: string, stage: Stage): Promise<ProposalsPayload> {
    return this.call("GET", `/sessions/${encodeURIComponent(sessionId)}/proposals?stage=${stage}`);
  }

  confirmProposal(sessionId: string, proposalId: string, decision: "accept" | "reject"): Promise<ConfirmPayload> {
    return this.call(
      "POST",
      `/sessions/${encodeURIComponent(sessionId)}/proposals/${encodeURIComponent(proposalId)}/confirm`,
      { decision },
    );
  }

  eventsSince(sessionId: string, since: number): Promise<EventsPayload> {
    return this.call("GET", `/sessions/${encodeURIComponent(sessionId)}/events?since=${since}`);
  }

  listTemplates(query?: string): Promise<TemplatesPayload> {
    const suffix = query === undefined ? "" : `?query=${encodeURIComponent(query)}`;
    return this.call("GET", `/store/templates${suffix}`);
  }

  applyTemplate(templateId: string, sessionId: string): Promise<ApplyPayload> {
    return this.call("POST", `/store/templates/${encodeURIComponent(templateId)}/apply`, {
      session_id: sessionId,
    });
  }
}

// -- event feed
//
// Prefers the server-push stream; falls back to polling when the
// environment has no EventSource or the stream errors out. Either way
// the consumer sees raw log records and applies its own ordering.

export interface FeedHandle {
  stop(): void;
}

export function subscribeEvents(
  baseUrl: string,
  sessionId: string,
  since: number,
  onRecord: (record: LogRecord) => void,
  client?: GatewayClient,
  pollMs = 1000,
): FeedHandle {
  const base = baseUrl.replace(/\/$/, "");
  const url = `${base}/sessions/${encodeURIComponent(sessionId)}/events?since=${since}`;

  if (typeof EventSource !== "undefined") {
    const source = new EventSource(url);
    let stopped = false;
    source.onmessage = (msg) => {
      onRecord(JSON.parse(msg.data) as LogRecord);
    };
    source.onerror = () => {
      // One-way degradation: a broken stream becomes a poll loop.
      if (!stopped) {
        source.close();
        stopped = true;
        startPolling();
      }
    };
    let poller: FeedHandle | null = null;
    const startPolling = () => {
      poller = pollEvents(client ?? new GatewayClient(fetchTransport(base)), sessionId, since, onRecord, pollMs);
    };
    return {
      stop() {
        stopped = true;
        source.close();
        poller?.stop();
      },
    };
  }

  return pollEvents(client ?? new GatewayClient(fetchTransport(base)), sessionId, since, onRecord, pollMs);
}

export function pollEvents(
  client: GatewayClient,
  sessionId: string,
  since: number,
  onRecord: (record: LogRecord) => void,
  pollMs = 1000,
): FeedHandle {
  let cursor = since;
  let stopped = false;
  const tick = async () => {
    if (stopped) return;
    try {
      const { events } = await client.eventsSince(sessionId, cursor);
      for (const record of events) {
        cursor = Math.max(cursor, record.seq);
        onRecord(record);
      }
    } catch {
      // Transient poll failures are retried on the next tick; the
      // controller's own refresh path reports persistent outages.
    }
    if (!stopped) {
      timer = setTimeout(tick, pollMs);
    }
  };
  let timer = setTimeout(tick, pollMs);
  return {
    stop() {
      stopped = true;
      clearTimeout(timer);
    },
  };
}
