/**
 * Browser entry point: builds a canvas-backed console and wires the DOM
 * controls (session form, context form, plan panel, pause/resume).
 */

import { ServiceClient, browserFetch, browserSocketFactory } from "./client.js";
import { Draw2D, SceneRenderer } from "./render.js";
import { OperatorConsole } from "./console.js";
import { SessionViewModel } from "./viewmodel.js";

function canvasDraw(canvas: HTMLCanvasElement): Draw2D {
  const ctx = canvas.getContext("2d");
  if (ctx === null) throw new Error("2d canvas context unavailable");
  return {
    width: canvas.width,
    height: canvas.height,
    clear: () => ctx.clearRect(0, 0, canvas.width, canvas.height),
    rect: (x, y, w, h, fill) => {
      ctx.fillStyle = fill;
      ctx.fillRect(x, y, w, h);
    },
    strokeRect: (x, y, w, h, stroke) => {
      ctx.strokeStyle = stroke;
      ctx.strokeRect(x, y, w, h);
    },
    text: (x, y, value, fill) => {
      ctx.fillStyle = fill;
      ctx.font = "11px monospace";
      ctx.fillText(value, x, y);
    },
    circle: (x, y, r, fill) => {
      ctx.fillStyle = fill;
      ctx.beginPath();
      ctx.arc(x, y, r, 0, 2 * Math.PI);
      ctx.fill();
    },
  };
}

function requireElement<T extends HTMLElement>(id: string): T {
  const element = document.getElementById(id);
  if (element === null) throw new Error(`missing #${id}`);
  return element as T;
}

export function boot(baseUrl: string): OperatorConsole {
  const canvas = requireElement<HTMLCanvasElement>("scene");
  const viewModel = new SessionViewModel();
  const client = new ServiceClient(baseUrl, browserFetch(fetch.bind(globalThis)), browserSocketFactory());
  const operatorConsole = new OperatorConsole(client, viewModel, new SceneRenderer(canvasDraw(canvas)));

  const planPanel = requireElement<HTMLOListElement>("plan-panel");
  const feedPanel = requireElement<HTMLUListElement>("event-feed");
  const errorLine = requireElement<HTMLDivElement>("inline-error");
  const contextInput = requireElement<HTMLTextAreaElement>("context-text");
  const contextSubmit = requireElement<HTMLButtonElement>("context-submit");

  viewModel.subscribe(() => {
    planPanel.replaceChildren(
      ...operatorConsole.panelOrder.map((label, index) => {
        const item = document.createElement("li");
        item.textContent = label;
        item.draggable = true;
        item.dataset.index = String(index);
        return item;
      }),
    );
    planPanel.dataset.provenance = operatorConsole.panelProvenance ?? "";
    feedPanel.replaceChildren(
      ...viewModel.feed.slice(-12).map((entry) => {
        const item = document.createElement("li");
        item.textContent = `#${entry.seq} ${entry.text}`;
        return item;
      }),
    );
    errorLine.textContent = operatorConsole.inlineError ?? "";
    contextSubmit.disabled = !operatorConsole.contextFormEnabled;
  });

  contextSubmit.addEventListener("click", () => {
    void operatorConsole.submitContext(contextInput.value).then(() => {
      contextSubmit.disabled = !operatorConsole.contextFormEnabled;
      errorLine.textContent = operatorConsole.inlineError ?? "";
    });
    contextSubmit.disabled = !operatorConsole.contextFormEnabled;
  });

  let dragFrom: number | null = null;
  planPanel.addEventListener("dragstart", (event) => {
    const target = event.target as HTMLElement;
    dragFrom = target.dataset.index === undefined ? null : Number(target.dataset.index);
  });
  planPanel.addEventListener("drop", (event) => {
    event.preventDefault();
    const target = event.target as HTMLElement;
    if (dragFrom === null || target.dataset.index === undefined) return;
    const dragTo = Number(target.dataset.index);
    const order = operatorConsole.panelOrder.slice();
    const [moved] = order.splice(dragFrom, 1);
    order.splice(dragTo, 0, moved!);
    dragFrom = null;
    void operatorConsole.reorderPlan(order).then(() => {
      errorLine.textContent = operatorConsole.inlineError ?? "";
    });
  });
  planPanel.addEventListener("dragover", (event) => event.preventDefault());

  requireElement<HTMLButtonElement>("pause").addEventListener("click", () => {
    void operatorConsole.pause();
  });
  requireElement<HTMLButtonElement>("resume").addEventListener("click", () => {
    void operatorConsole.resume();
  });

  const sessionForm = requireElement<HTMLFormElement>("session-form");
  sessionForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const data = new FormData(sessionForm);
    void client
      .createSession({
        env_id: Number(data.get("env_id")),
        seed: Number(data.get("seed") ?? 0),
        module: String(data.get("module") ?? "rule"),
        mode: data.get("mode") === "live" ? "live" : "lockstep",
      })
      .then((sessionId) => operatorConsole.connect(sessionId))
      .catch((error) => {
        errorLine.textContent = String(error);
      });
  });

  return operatorConsole;
}
