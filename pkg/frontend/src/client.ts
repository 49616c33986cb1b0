/**
 * Thin HTTP/WebSocket client for the session service.
 *
 * Both the fetch implementation and the websocket factory are injected so
 * tests can script the server; browser code passes `browserFetch` and
 * `browserSocketFactory` below.
 */

export interface HttpResponse {
  status: number;
  body: unknown;
}

export type FetchLike = (
  url: string,
  init: { method: string; body?: string },
) => Promise<HttpResponse>;

export interface SocketLike {
  onmessage: ((data: string) => void) | null;
  onclose: (() => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export interface CreateSessionRequest {
  env_id: number;
  seed?: number;
  module: string;
  mode?: "lockstep" | "live";
  total_particles?: number;
  state_every?: number;
  distractor_tool?: boolean;
  cassette?: string;
}

/** Raised for any non-2xx response; `detail` carries the service message. */
export class ServiceError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`service responded ${status}: ${detail}`);
  }
}

function detailOf(body: unknown): string {
  if (typeof body === "object" && body !== null && "detail" in body) {
    return String((body as { detail: unknown }).detail);
  }
  return JSON.stringify(body);
}

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike,
    private readonly socketFactory: SocketFactory,
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<unknown> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (response.status < 200 || response.status >= 300) {
      throw new ServiceError(response.status, detailOf(response.body));
    }
    return response.body;
  }

  async createSession(request: CreateSessionRequest): Promise<string> {
    const body = (await this.request("POST", "/sessions", request)) as { id: string };
    return body.id;
  }

  async status(sessionId: string): Promise<unknown> {
    return this.request("GET", `/sessions/${sessionId}`);
  }

  async submitContext(sessionId: string, text: string): Promise<void> {
    await this.request("POST", `/sessions/${sessionId}/context`, { text });
  }

  async overridePlan(sessionId: string, labels: string[]): Promise<void> {
    await this.request("POST", `/sessions/${sessionId}/plan`, { labels });
  }

  async pause(sessionId: string): Promise<void> {
    await this.request("POST", `/sessions/${sessionId}/pause`);
  }

  async resume(sessionId: string): Promise<void> {
    await this.request("POST", `/sessions/${sessionId}/resume`);
  }

  async advance(sessionId: string, steps: number): Promise<void> {
    await this.request("POST", `/sessions/${sessionId}/advance`, { steps });
  }

  async closeSession(sessionId: string): Promise<void> {
    await this.request("DELETE", `/sessions/${sessionId}`);
  }

  /** Open the stream socket; the service replays the backlog from seq 1. */
  openStream(sessionId: string): SocketLike {
    const wsBase = this.baseUrl.replace(/^http/, "ws");
    return this.socketFactory(`${wsBase}/sessions/${sessionId}/stream`);
  }
}

/** Adapter from the browser fetch API to `FetchLike`. */
export function browserFetch(fetchFn: typeof fetch): FetchLike {
  return async (url, init) => {
    const response = await fetchFn(url, {
      method: init.method,
      body: init.body,
      headers: init.body === undefined ? undefined : { "content-type": "application/json" },
    });
    let body: unknown = null;
    try {
      body = await response.json();
    } catch {
      body = null;
    }
    return { status: response.status, body };
  };
}

/** Adapter from the browser WebSocket API to `SocketFactory`. */
export function browserSocketFactory(): SocketFactory {
  return (url) => {
    const ws = new WebSocket(url);
    const wrapper: SocketLike = {
      onmessage: null,
      onclose: null,
      close: () => ws.close(),
    };
    ws.onmessage = (event) => wrapper.onmessage?.(String(event.data));
    ws.onclose = () => wrapper.onclose?.();
    return wrapper;
  };
}
