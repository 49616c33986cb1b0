import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { FetchLike, HttpResponse, SocketLike } from "../src/client.js";
import { SessionMessage, StatePayload } from "../src/protocol.js";

export interface FixtureDoc {
  session_id: string;
  guideline: string;
  clot_label: string;
  messages: SessionMessage[];
  http: {
    create: HttpResponse;
    context: HttpResponse;
    override: HttpResponse;
    bad_override: HttpResponse;
  };
}

export function loadFixture(): FixtureDoc {
  const here = dirname(fileURLToPath(import.meta.url));
  const raw = readFileSync(join(here, "fixtures", "env4_session.json"), "utf-8");
  return JSON.parse(raw) as FixtureDoc;
}

/** In-memory socket that tests drive by calling `emit`. */
export class FakeSocket implements SocketLike {
  onmessage: ((data: string) => void) | null = null;
  onclose: (() => void) | null = null;
  closed = false;

  close(): void {
    this.closed = true;
    this.onclose?.();
  }

  emit(message: unknown): void {
    this.onmessage?.(JSON.stringify(message));
  }

  emitRaw(data: string): void {
    this.onmessage?.(data);
  }
}

export interface RecordedCall {
  url: string;
  method: string;
  body: unknown;
}

/** Scripted fetch: responds from a queue keyed by `METHOD path`. */
export class FakeFetch {
  calls: RecordedCall[] = [];
  private routes = new Map<string, HttpResponse[]>();

  respond(method: string, path: string, response: HttpResponse): void {
    const key = `${method} ${path}`;
    const queue = this.routes.get(key) ?? [];
    queue.push(response);
    this.routes.set(key, queue);
  }

  get fn(): FetchLike {
    return async (url, init) => {
      const path = url.replace(/^https?:\/\/[^/]+/, "");
      this.calls.push({
        url,
        method: init.method,
        body: init.body === undefined ? undefined : JSON.parse(init.body),
      });
      const queue = this.routes.get(`${init.method} ${path}`);
      const response = queue?.shift();
      if (response === undefined) {
        throw new Error(`no scripted response for ${init.method} ${path}`);
      }
      return response;
    };
  }
}

export function sampleState(overrides: Partial<StatePayload> = {}): StatePayload {
  return {
    step_index: 0,
    pools: [
      {
        label: "P1",
        bbox: [2, 2, 5, 6],
        area: 20,
        bleeding: false,
        clot: false,
        tool_adjacent: false,
      },
    ],
    mask: ["0000000000", "0011111000", "0011111000", "0000000000"],
    tool: [0.5, 0.5, 0.2],
    target: "P1",
    remaining_fraction: 0.8,
    active: 100,
    done: false,
    paused: false,
    ...overrides,
  };
}
