/**
 * Wire types for the session-service stream and HTTP endpoints.
 *
 * Every stream frame is a `SessionMessage`: a monotonically increasing
 * sequence number, a message type, and a type-specific payload. The
 * service replays the full backlog from seq 1 on every websocket
 * (re)connect, so a client can always reconstruct its state from the
 * stream alone.
 */

export type MessageType = "state" | "plan" | "prompt" | "event" | "command-ack";

export interface PoolSummary {
  label: string;
  /** Grid-space bounding box: [row0, col0, row1, col1], inclusive. */
  bbox: [number, number, number, number];
  area: number;
  bleeding: boolean;
  clot: boolean;
  tool_adjacent: boolean;
}

export interface StatePayload {
  step_index: number;
  pools: PoolSummary[];
  /** Downsampled occupancy grid; each row is a string of '0'/'1'. */
  mask: string[];
  tool: [number, number, number];
  target: string | null;
  remaining_fraction: number;
  active: number;
  done: boolean;
  paused: boolean;
}

export interface PlanPayload {
  step_index: number;
  labels: string[];
  provenance: string;
  rationales: string[];
  full_mask: boolean;
}

export interface PromptPayload {
  context: string;
  step_index: number;
}

export interface EventPayload {
  kind: string;
  [key: string]: unknown;
}

export interface CommandAckPayload {
  command: string;
  ok: boolean;
  labels?: string[];
}

export interface SessionMessage {
  type: MessageType;
  seq: number;
  payload:
    | StatePayload
    | PlanPayload
    | PromptPayload
    | EventPayload
    | CommandAckPayload;
}

const MESSAGE_TYPES: ReadonlySet<string> = new Set([
  "state",
  "plan",
  "prompt",
  "event",
  "command-ack",
]);

function isRecord(value: unknown): value is Record<string, unknown> {
  return typeof value === "object" && value !== null && !Array.isArray(value);
}

function isStringArray(value: unknown): value is string[] {
  return Array.isArray(value) && value.every((v) => typeof v === "string");
}

function isPoolSummary(value: unknown): value is PoolSummary {
  if (!isRecord(value)) return false;
  return (
    typeof value.label === "string" &&
    Array.isArray(value.bbox) &&
    value.bbox.length === 4 &&
    value.bbox.every((v) => typeof v === "number") &&
    typeof value.area === "number" &&
    typeof value.bleeding === "boolean" &&
    typeof value.clot === "boolean" &&
    typeof value.tool_adjacent === "boolean"
  );
}

export function isStatePayload(value: unknown): value is StatePayload {
  if (!isRecord(value)) return false;
  return (
    typeof value.step_index === "number" &&
    Array.isArray(value.pools) &&
    value.pools.every(isPoolSummary) &&
    isStringArray(value.mask) &&
    Array.isArray(value.tool) &&
    value.tool.length === 3 &&
    value.tool.every((v) => typeof v === "number") &&
    (value.target === null || typeof value.target === "string") &&
    typeof value.remaining_fraction === "number" &&
    typeof value.active === "number" &&
    typeof value.done === "boolean" &&
    typeof value.paused === "boolean"
  );
}

export function isPlanPayload(value: unknown): value is PlanPayload {
  if (!isRecord(value)) return false;
  return (
    typeof value.step_index === "number" &&
    isStringArray(value.labels) &&
    typeof value.provenance === "string" &&
    isStringArray(value.rationales) &&
    typeof value.full_mask === "boolean"
  );
}

export function isPromptPayload(value: unknown): value is PromptPayload {
  if (!isRecord(value)) return false;
  return typeof value.context === "string" && typeof value.step_index === "number";
}

export function isCommandAckPayload(value: unknown): value is CommandAckPayload {
  if (!isRecord(value)) return false;
  if (typeof value.command !== "string" || typeof value.ok !== "boolean") return false;
  return value.labels === undefined || isStringArray(value.labels);
}

export function isEventPayload(value: unknown): value is EventPayload {
  return isRecord(value) && typeof value.kind === "string";
}

/**
 * Validate a raw decoded JSON value as a SessionMessage. Returns null for
 * anything malformed rather than throwing, so callers can keep the last
 * good frame on display and surface an error banner.
 */
export function parseSessionMessage(raw: unknown): SessionMessage | null {
  if (!isRecord(raw)) return null;
  const { type, seq, payload } = raw;
  if (typeof type !== "string" || !MESSAGE_TYPES.has(type)) return null;
  if (typeof seq !== "number" || !Number.isInteger(seq) || seq < 1) return null;
  let ok: boolean;
  switch (type) {
    case "state":
      ok = isStatePayload(payload);
      break;
    case "plan":
      ok = isPlanPayload(payload);
      break;
    case "prompt":
      ok = isPromptPayload(payload);
      break;
    case "event":
      ok = isEventPayload(payload);
      break;
    case "command-ack":
      ok = isCommandAckPayload(payload);
      break;
    default:
      ok = false;
  }
  if (!ok) return null;
  return { type: type as MessageType, seq, payload } as SessionMessage;
}
