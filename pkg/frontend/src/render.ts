/**
 * Scene renderer for the operator console.
 *
 * Draws the downsampled occupancy grid, pool bounding boxes with labels
 * and bleeding/clot/instrument badges, the suction-tool marker, the
 * current target highlight, and a remaining-fraction gauge. All drawing
 * goes through the minimal `Draw2D` interface so tests can record calls
 * and a browser adapter can forward them to a canvas context.
 */

import { PlanPayload, StatePayload, isStatePayload } from "./protocol.js";

export interface Draw2D {
  clear(): void;
  rect(x: number, y: number, w: number, h: number, fill: string): void;
  strokeRect(x: number, y: number, w: number, h: number, stroke: string): void;
  text(x: number, y: number, value: string, fill: string): void;
  circle(x: number, y: number, r: number, fill: string): void;
  readonly width: number;
  readonly height: number;
}

export const COLORS = {
  background: "#10141a",
  fluid: "#b3122e",
  poolBox: "#7f8c9a",
  targetBox: "#ffd166",
  bleeding: "#ff5252",
  clot: "#8d5a97",
  toolAdjacent: "#4dd0e1",
  tool: "#e0e0e0",
  gaugeTrack: "#2b323c",
  gaugeFill: "#2e86de",
  banner: "#ff8f00",
  label: "#f5f5f5",
} as const;

const GAUGE_HEIGHT = 12;

export class SceneRenderer {
  private lastGood: StatePayload | null = null;

  constructor(private readonly draw: Draw2D) {}

  /**
   * Render a state frame. A malformed frame (or an explicit banner from
   * the view model) keeps the last good frame on screen under an error
   * banner instead of blanking the view.
   */
  render(frame: unknown, plan: PlanPayload | null, banner: string | null = null): void {
    let effectiveBanner = banner;
    let state: StatePayload | null;
    if (frame === null) {
      state = this.lastGood;
    } else if (isStatePayload(frame)) {
      state = frame;
      this.lastGood = frame;
    } else {
      state = this.lastGood;
      effectiveBanner = effectiveBanner ?? "malformed frame received; showing last good view";
    }

    const d = this.draw;
    d.clear();
    d.rect(0, 0, d.width, d.height, COLORS.background);
    if (state !== null) {
      this.renderState(state, plan);
    }
    if (effectiveBanner !== null) {
      d.rect(0, 0, d.width, 18, COLORS.banner);
      d.text(4, 13, effectiveBanner, COLORS.background);
    }
  }

  private renderState(state: StatePayload, plan: PlanPayload | null): void {
    const d = this.draw;
    const rows = state.mask.length;
    const cols = rows > 0 ? state.mask[0]!.length : 0;
    const gridH = d.height - GAUGE_HEIGHT - 4;
    const cellW = cols > 0 ? d.width / cols : 0;
    const cellH = rows > 0 ? gridH / rows : 0;

    for (let r = 0; r < rows; r += 1) {
      const row = state.mask[r]!;
      for (let c = 0; c < cols; c += 1) {
        if (row[c] === "1") {
          d.rect(c * cellW, r * cellH, cellW, cellH, COLORS.fluid);
        }
      }
    }

    for (const pool of state.pools) {
      const [r0, c0, r1, c1] = pool.bbox;
      const isTarget = state.target === pool.label;
      d.strokeRect(
        c0 * cellW,
        r0 * cellH,
        (c1 - c0 + 1) * cellW,
        (r1 - r0 + 1) * cellH,
        isTarget ? COLORS.targetBox : COLORS.poolBox,
      );
      const badges: string[] = [];
      if (pool.bleeding) badges.push("bleeding");
      if (pool.clot) badges.push("clot");
      if (pool.tool_adjacent) badges.push("instrument");
      const caption = badges.length > 0 ? `${pool.label} [${badges.join(",")}]` : pool.label;
      d.text(c0 * cellW, r0 * cellH - 2, caption, COLORS.label);
    }

    if (rows > 0 && state.pools.length === 0) {
      d.text(d.width / 2 - 20, gridH / 2, "field clear", COLORS.label);
    }

    // Tool position is in workspace [0, 1]^2 on x/y; z sets the marker size.
    const [tx, ty, tz] = state.tool;
    d.circle(tx * d.width, ty * gridH, Math.max(2, 6 - tz * 10), COLORS.tool);

    const gaugeY = d.height - GAUGE_HEIGHT;
    d.rect(0, gaugeY, d.width, GAUGE_HEIGHT, COLORS.gaugeTrack);
    const frac = Math.min(1, Math.max(0, state.remaining_fraction));
    d.rect(0, gaugeY, d.width * frac, GAUGE_HEIGHT, COLORS.gaugeFill);
    d.text(4, gaugeY + GAUGE_HEIGHT - 2, `remaining ${(frac * 100).toFixed(0)}%`, COLORS.label);

    if (plan !== null) {
      d.text(4, 28, `plan (${plan.provenance}): ${plan.labels.join(" > ")}`, COLORS.label);
    }
    if (state.paused) {
      d.text(d.width - 52, 28, "paused", COLORS.label);
    }
    if (state.done) {
      d.text(d.width / 2 - 16, 40, "done", COLORS.targetBox);
    }
  }
}
