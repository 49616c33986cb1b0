/**
 * Operator console controller: wires the stream view model, the scene
 * renderer, and the service client together.
 *
 * Rules enforced here:
 *  - every user action issues exactly one service command;
 *  - the context form is disabled from submission until its ack;
 *  - a drag that does not change the plan order issues no command;
 *  - a rejected override (unknown labels, 422) shows the rejection inline
 *    and re-syncs the plan panel with the live plan;
 *  - no state is kept outside the view model, so a reload + reconnect
 *    fully reconstructs the console from the stream backlog.
 */

import { ServiceClient, ServiceError, SocketLike } from "./client.js";
import { CommandAckPayload, PlanPayload, SessionMessage } from "./protocol.js";
import { SceneRenderer } from "./render.js";
import { SessionViewModel } from "./viewmodel.js";

export type ActionResult = "sent" | "rejected" | "noop";

function sameOrder(a: string[], b: string[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

export class OperatorConsole {
  contextFormEnabled = true;
  inlineError: string | null = null;
  /** Plan panel contents; mirrors the highest-sequence plan message. */
  panelOrder: string[] = [];
  panelProvenance: string | null = null;

  private sessionId: string | null = null;
  private socket: SocketLike | null = null;

  constructor(
    private readonly client: ServiceClient,
    readonly viewModel: SessionViewModel,
    private readonly renderer: SceneRenderer | null = null,
  ) {
    viewModel.subscribe((message) => this.onApplied(message));
  }

  /** Attach to a session's stream. Safe to call again after a reload. */
  connect(sessionId: string): void {
    this.socket?.close();
    this.sessionId = sessionId;
    this.viewModel.reset();
    this.panelOrder = [];
    this.panelProvenance = null;
    this.viewModel.connection = "connecting";
    this.socket = this.client.openStream(sessionId);
    this.socket.onmessage = (data) => {
      let decoded: unknown;
      try {
        decoded = JSON.parse(data);
      } catch {
        this.viewModel.errorBanner = "malformed frame received; showing last good view";
        this.renderScene();
        return;
      }
      if (this.viewModel.connection === "connecting") this.viewModel.connection = "live";
      this.viewModel.ingest(decoded);
      if (this.viewModel.errorBanner !== null) this.renderScene();
    };
    this.socket.onclose = () => {
      this.viewModel.connection =
        this.viewModel.state?.done === true ? "ended" : "disconnected";
    };
  }

  /** Submit guideline text; disabled until the matching ack arrives. */
  async submitContext(text: string): Promise<ActionResult> {
    if (this.sessionId === null || !this.contextFormEnabled) return "noop";
    if (text.trim().length === 0) return "noop";
    this.contextFormEnabled = false;
    this.inlineError = null;
    try {
      await this.client.submitContext(this.sessionId, text);
      return "sent";
    } catch (error) {
      this.contextFormEnabled = true;
      this.inlineError = error instanceof ServiceError ? error.detail : String(error);
      return "rejected";
    }
  }

  /** Apply a drag-reorder of the plan panel. */
  async reorderPlan(order: string[]): Promise<ActionResult> {
    if (this.sessionId === null) return "noop";
    if (sameOrder(order, this.panelOrder)) return "noop";
    this.inlineError = null;
    try {
      await this.client.overridePlan(this.sessionId, order);
      return "sent";
    } catch (error) {
      this.inlineError = error instanceof ServiceError ? error.detail : String(error);
      // re-sync the panel with the live plan after a rejection
      this.panelOrder = this.viewModel.plan?.labels.slice() ?? [];
      this.panelProvenance = this.viewModel.plan?.provenance ?? null;
      return "rejected";
    }
  }

  async pause(): Promise<ActionResult> {
    if (this.sessionId === null) return "noop";
    await this.client.pause(this.sessionId);
    return "sent";
  }

  async resume(): Promise<ActionResult> {
    if (this.sessionId === null) return "noop";
    await this.client.resume(this.sessionId);
    return "sent";
  }

  disconnect(): void {
    this.socket?.close();
    this.socket = null;
    this.viewModel.connection = "disconnected";
  }

  private onApplied(message: SessionMessage): void {
    switch (message.type) {
      case "plan": {
        const plan = message.payload as PlanPayload;
        this.panelOrder = plan.labels.slice();
        this.panelProvenance = plan.provenance;
        this.renderScene();
        break;
      }
      case "state":
        this.renderScene();
        break;
      case "command-ack": {
        const ack = message.payload as CommandAckPayload;
        if (ack.command === "context") this.contextFormEnabled = true;
        break;
      }
      default:
        break;
    }
  }

  private renderScene(): void {
    this.renderer?.render(
      this.viewModel.state,
      this.viewModel.plan,
      this.viewModel.errorBanner,
    );
  }
}
