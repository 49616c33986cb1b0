/**
 * Single-threaded view model for the operator console.
 *
 * Stream messages are applied strictly in sequence order; frames that
 * arrive out of order are buffered until the gap fills. Invariant: the
 * rendered plan always matches the highest-sequence plan message
 * received (which, under in-order application, is simply the most
 * recently applied one).
 */

import {
  CommandAckPayload,
  EventPayload,
  PlanPayload,
  PromptPayload,
  SessionMessage,
  StatePayload,
  parseSessionMessage,
} from "./protocol.js";

export type ConnectionStatus = "disconnected" | "connecting" | "live" | "ended";

export interface FeedEntry {
  seq: number;
  text: string;
}

export type ViewModelListener = (message: SessionMessage) => void;

export class SessionViewModel {
  state: StatePayload | null = null;
  plan: PlanPayload | null = null;
  /** Most recent operator context echoed back by the service. */
  prompt: PromptPayload | null = null;
  feed: FeedEntry[] = [];
  connection: ConnectionStatus = "disconnected";
  /** Set when a frame fails validation; cleared by the next good frame. */
  errorBanner: string | null = null;

  private nextSeq = 1;
  private buffer = new Map<number, SessionMessage>();
  private listeners: ViewModelListener[] = [];

  /** Seq of the last applied message; 0 before any frame arrives. */
  get lastSeq(): number {
    return this.nextSeq - 1;
  }

  subscribe(listener: ViewModelListener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  /**
   * Reset stream-derived fields. Called on reconnect: the service replays
   * its backlog from seq 1, so nothing needs to survive across sockets.
   */
  reset(): void {
    this.state = null;
    this.plan = null;
    this.prompt = null;
    this.feed = [];
    this.errorBanner = null;
    this.nextSeq = 1;
    this.buffer.clear();
  }

  /** Ingest one raw frame from the socket (already JSON-decoded). */
  ingest(raw: unknown): void {
    const message = parseSessionMessage(raw);
    if (message === null) {
      this.errorBanner = "malformed frame received; showing last good view";
      return;
    }
    if (message.seq < this.nextSeq) return; // duplicate from backlog replay
    this.buffer.set(message.seq, message);
    let next = this.buffer.get(this.nextSeq);
    while (next !== undefined) {
      this.buffer.delete(this.nextSeq);
      this.nextSeq += 1;
      this.apply(next);
      next = this.buffer.get(this.nextSeq);
    }
  }

  private apply(message: SessionMessage): void {
    this.errorBanner = null;
    switch (message.type) {
      case "state":
        this.state = message.payload as StatePayload;
        break;
      case "plan": {
        this.plan = message.payload as PlanPayload;
        const plan = this.plan;
        this.pushFeed(message.seq, `plan (${plan.provenance}): ${plan.labels.join(" > ")}`);
        break;
      }
      case "prompt": {
        this.prompt = message.payload as PromptPayload;
        this.pushFeed(message.seq, "operator context accepted");
        break;
      }
      case "event": {
        const event = message.payload as EventPayload;
        this.pushFeed(message.seq, `event: ${event.kind}`);
        break;
      }
      case "command-ack": {
        const ack = message.payload as CommandAckPayload;
        this.pushFeed(message.seq, `ack: ${ack.command} ${ack.ok ? "ok" : "failed"}`);
        break;
      }
    }
    for (const listener of [...this.listeners]) listener(message);
  }

  private pushFeed(seq: number, text: string): void {
    this.feed.push({ seq, text });
    if (this.feed.length > 200) this.feed.splice(0, this.feed.length - 200);
  }
}
