import { describe, expect, it } from "vitest";
import { SessionMessage, StatePayload, PlanPayload } from "../src/protocol.js";
import { SessionViewModel } from "../src/viewmodel.js";
import { loadFixture, sampleState } from "./helpers.js";

function planMessage(seq: number, labels: string[], provenance = "RULE"): SessionMessage {
  return {
    type: "plan",
    seq,
    payload: { step_index: 0, labels, provenance, rationales: labels, full_mask: false },
  };
}

function stateMessage(seq: number, stepIndex: number): SessionMessage {
  return { type: "state", seq, payload: sampleState({ step_index: stepIndex }) };
}

describe("SessionViewModel", () => {
  it("applies in-order messages and tracks the latest state and plan", () => {
    const vm = new SessionViewModel();
    vm.ingest(planMessage(1, ["P1", "P2"]));
    vm.ingest(stateMessage(2, 0));
    vm.ingest(stateMessage(3, 5));
    expect(vm.plan?.labels).toEqual(["P1", "P2"]);
    expect((vm.state as StatePayload).step_index).toBe(5);
    expect(vm.lastSeq).toBe(3);
  });

  it("buffers out-of-order messages until the gap fills", () => {
    const vm = new SessionViewModel();
    const applied: number[] = [];
    vm.subscribe((m) => applied.push(m.seq));
    vm.ingest(stateMessage(3, 5));
    vm.ingest(planMessage(2, ["P1"]));
    expect(applied).toEqual([]); // nothing applied before seq 1 arrives
    vm.ingest(planMessage(1, ["P2", "P1"]));
    expect(applied).toEqual([1, 2, 3]);
    expect(vm.plan?.labels).toEqual(["P1"]);
  });

  it("rendered plan always matches the highest-sequence plan message", () => {
    const vm = new SessionViewModel();
    vm.ingest(planMessage(1, ["P1", "P2", "P3"]));
    vm.ingest(stateMessage(2, 0));
    // late-arriving higher-seq plan delivered before the gap is closed
    vm.ingest(planMessage(5, ["P3", "P2", "P1"], "OPERATOR"));
    expect(vm.plan?.labels).toEqual(["P1", "P2", "P3"]);
    vm.ingest(stateMessage(4, 10));
    vm.ingest(stateMessage(3, 5));
    expect(vm.plan?.labels).toEqual(["P3", "P2", "P1"]);
    expect(vm.plan?.provenance).toBe("OPERATOR");
  });

  it("ignores duplicate frames from a backlog replay", () => {
    const vm = new SessionViewModel();
    const applied: number[] = [];
    vm.subscribe((m) => applied.push(m.seq));
    vm.ingest(planMessage(1, ["P1"]));
    vm.ingest(planMessage(1, ["P9"]));
    expect(applied).toEqual([1]);
    expect(vm.plan?.labels).toEqual(["P1"]);
  });

  it("flags malformed frames and keeps prior content", () => {
    const vm = new SessionViewModel();
    vm.ingest(planMessage(1, ["P1"]));
    vm.ingest({ type: "state", seq: 2, payload: { step_index: "oops" } });
    expect(vm.errorBanner).toContain("malformed");
    expect(vm.plan?.labels).toEqual(["P1"]);
    vm.ingest(stateMessage(2, 0));
    expect(vm.errorBanner).toBeNull();
  });

  it("reconstructs identical content from a full backlog replay (reload)", () => {
    const fixture = loadFixture();
    const first = new SessionViewModel();
    for (const message of fixture.messages) first.ingest(message);
    const second = new SessionViewModel();
    // arbitrary interleaving: replay the backlog in reverse
    for (const message of [...fixture.messages].reverse()) second.ingest(message);
    expect(second.state).toEqual(first.state);
    expect(second.plan).toEqual(first.plan);
    expect(second.feed).toEqual(first.feed);
    expect((first.plan as PlanPayload).provenance).toBe("OPERATOR");
  });

  it("reset clears everything so a reconnect starts from seq 1", () => {
    const vm = new SessionViewModel();
    vm.ingest(planMessage(1, ["P1"]));
    vm.ingest(stateMessage(2, 0));
    vm.reset();
    expect(vm.plan).toBeNull();
    expect(vm.state).toBeNull();
    expect(vm.feed).toEqual([]);
    expect(vm.lastSeq).toBe(0);
    vm.ingest(planMessage(1, ["P2"]));
    expect(vm.plan?.labels).toEqual(["P2"]);
  });

  it("builds a readable feed from plans, prompts, events, and acks", () => {
    const vm = new SessionViewModel();
    vm.ingest(planMessage(1, ["P1", "P2"]));
    vm.ingest({ type: "prompt", seq: 2, payload: { context: "guideline", step_index: 3 } });
    vm.ingest({ type: "event", seq: 3, payload: { kind: "heartbeat" } });
    vm.ingest({ type: "command-ack", seq: 4, payload: { command: "context", ok: true } });
    expect(vm.feed.map((entry) => entry.text)).toEqual([
      "plan (RULE): P1 > P2",
      "operator context accepted",
      "event: heartbeat",
      "ack: context ok",
    ]);
    expect(vm.prompt?.context).toBe("guideline");
  });
});
