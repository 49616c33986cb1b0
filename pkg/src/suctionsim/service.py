"""Interactive session gateway: one live episode behind HTTP + WebSocket.

A session owns a single episode (environment, scripted policy, record) and
mirrors the headless harness step-for-step, so a session with no operator
input produces a byte-identical record. Operator commands are applied
between simulation steps; every accepted command produces exactly one
``command-ack`` stream message. Sessions advance either on a wall-clock
tick (``live`` mode) or only through explicit ``/advance`` calls
(``lockstep`` mode, used by protocol tests).
"""

from __future__ import annotations

import asyncio
import json
from importlib import resources

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, PlainTextResponse

from .control import ScriptedPolicy, SuctionEnv
from .errors import ConfigError, ScenarioError
from .harness import make_backend
from .llm_client import ChatClient, load_cassette
from .records import EpisodeRecord
from .scenario import ScenarioConfig, generate_scenario

LIVE_TICK_SECONDS = 0.02  # 50 sim steps per wall-clock second
HEARTBEAT_SECONDS = 0.5


def _downsample(grid: np.ndarray, factor: int = 2) -> list[str]:
    """OR-pool the boolean mask and pack rows as '0'/'1' strings."""
    rows, cols = grid.shape
    r, c = rows // factor, cols // factor
    pooled = grid[: r * factor, : c * factor].reshape(r, factor, c, factor).any(axis=(1, 3))
    return ["".join("1" if v else "0" for v in row) for row in pooled]


class Session:
    """Single episode plus its message log; all methods run on one loop."""

    def __init__(self, sid: str, scenario: ScenarioConfig, module: str,
                 mode: str = "lockstep", state_every: int = 5,
                 cassette_path: str | None = None):
        if mode not in ("lockstep", "live"):
            raise ConfigError(f"unknown session mode {mode!r}")
        client = None
        if module in ("lrwoc", "lrwc"):
            if cassette_path is None:
                raise ConfigError(f"module {module!r} needs a cassette in the service")
            client = ChatClient(mode="replay", cassette=load_cassette(cassette_path))
        self.id = sid
        self.module = module
        self.mode = mode
        self.state_every = max(1, int(state_every))
        self.env = SuctionEnv(scenario, make_backend(module, scenario.seed, client))
        self.policy = ScriptedPolicy(scenario.physics)
        self.record = EpisodeRecord(scenario=scenario.to_dict(), module=module)
        self.paused = True
        self.closed = False
        self.seq = 0
        self.messages: list[dict] = []
        self._seen_plans = 0
        self._steps_since_state = 0
        self._finalized = False

        self.step = self.env.reset()
        self.record.initial_active = self.env.initial_active
        self.record.add_step(self.step.info, self.step.reward.total)
        self._flush_plans()
        self._emit("state", self._frame())

    # -- message log -----------------------------------------------------

    def _emit(self, mtype: str, payload: dict) -> dict:
        self.seq += 1
        message = {"type": mtype, "seq": self.seq, "payload": payload}
        self.messages.append(message)
        return message

    def _flush_plans(self) -> None:
        while self._seen_plans < len(self.env.plans):
            plan = self.env.plans[self._seen_plans]
            self.record.add_plan(self.step.info["step_index"], plan)
            self._emit("plan", {
                "step_index": self.step.info["step_index"],
                "labels": list(plan.labels),
                "provenance": plan.provenance,
                "rationales": list(plan.rationales),
                "full_mask": bool(plan.full_mask),
            })
            self._seen_plans += 1

    def _frame(self) -> dict:
        info = self.step.info
        pools = [
            {
                "label": p.label,
                "bbox": list(p.bbox),
                "area": int(p.area),
                "bleeding": bool(p.bleeding),
                "clot": bool(p.clot),
                "tool_adjacent": bool(p.tool_adjacent),
            }
            for p in self.env.pools
        ]
        spawned = max(1, info["spawned"])
        return {
            "step_index": info["step_index"],
            "pools": pools,
            "mask": _downsample(self.env.mask.grid),
            "tool": info["tool"],
            "target": info["target"],
            "remaining_fraction": info["active"] / spawned,
            "active": info["active"],
            "done": self.env.done,
            "paused": self.paused,
        }

    # -- episode control ---------------------------------------------------

    @property
    def done(self) -> bool:
        return self.env.done

    def advance(self, steps: int = 1) -> int:
        """Run up to `steps` simulation steps; mirrors the headless loop."""
        ran = 0
        while ran < steps and not self.paused and not self.env.done:
            command = self.policy.act(self.step.observation)
            self.step = self.env.step(command)
            self.record.add_step(self.step.info, self.step.reward.total)
            self._flush_plans()
            ran += 1
            self._steps_since_state += 1
            if self._steps_since_state >= self.state_every or self.env.done:
                self._emit("state", self._frame())
                self._steps_since_state = 0
        if self.env.done and not self._finalized:
            self._finalize()
        return ran

    def _finalize(self) -> None:
        self._finalized = True
        self.record.events = list(self.env.events)
        self.record.completed = self.step.info["active"] == 0
        if any(ev.get("type") == "llm_degradation" for ev in self.record.events):
            self.record.tainted = True
        self._emit("event", {"kind": "episode_done", "step_index": self.step.info["step_index"]})

    # -- operator commands -------------------------------------------------

    def submit_context(self, text: str) -> dict:
        self.env.submit_context(text)
        self._emit("prompt", {"context": text, "step_index": self.step.info["step_index"]})
        return self._emit("command-ack", {"command": "context", "ok": True})

    def override_plan(self, labels: list[str]) -> dict:
        plan = self.env.override_plan(labels)
        return self._emit("command-ack", {
            "command": "plan", "ok": True, "labels": list(plan.labels),
        })

    def pause(self) -> dict:
        self.paused = True
        return self._emit("command-ack", {"command": "pause", "ok": True})

    def resume(self) -> dict:
        self.paused = False
        return self._emit("command-ack", {"command": "resume", "ok": True})

    def close(self) -> None:
        self.closed = True
        self._emit("event", {"kind": "stream_end"})

    def status(self) -> dict:
        return {
            "id": self.id,
            "module": self.module,
            "mode": self.mode,
            "paused": self.paused,
            "done": self.env.done,
            "step_index": self.step.info["step_index"],
            "seq": self.seq,
        }


def create_app(capacity: int = 1) -> FastAPI:
    app = FastAPI(title="suction session service")
    sessions: dict[str, Session] = {}
    counter = {"next": 1}

    def _get(sid: str) -> Session:
        session = sessions.get(sid)
        if session is None:
            raise HTTPException(404, f"no session {sid!r}")
        return session

    async def _live_loop(session: Session) -> None:
        idle = 0.0
        while not session.closed and not session.done:
            if session.paused:
                await asyncio.sleep(LIVE_TICK_SECONDS)
                idle += LIVE_TICK_SECONDS
                if idle >= HEARTBEAT_SECONDS:
                    session._emit("event", {"kind": "heartbeat"})
                    idle = 0.0
                continue
            idle = 0.0
            session.advance(1)
            await asyncio.sleep(LIVE_TICK_SECONDS)

    @app.get("/schema")
    def schema() -> JSONResponse:
        text = resources.files("suctionsim.templates").joinpath("session_schema.json").read_text()
        return JSONResponse(json.loads(text))

    @app.post("/sessions", status_code=201)
    async def create_session(body: dict):
        live = [s for s in sessions.values() if not s.closed]
        if len(live) >= capacity:
            raise HTTPException(409, f"capacity {capacity} reached; close a session first")
        try:
            if "scenario" in body:
                scenario = ScenarioConfig.from_dict(body["scenario"])
            else:
                scenario = generate_scenario(
                    int(body["env_id"]),
                    int(body.get("seed", 0)),
                    total_particles=int(body.get("total_particles", 4000)),
                    distractor_tool=bool(body.get("distractor_tool", False)),
                )
            session = Session(
                f"s{counter['next']}",
                scenario,
                body["module"],
                mode=body.get("mode", "lockstep"),
                state_every=int(body.get("state_every", 5)),
                cassette_path=body.get("cassette"),
            )
        except (KeyError, TypeError, ValueError, ConfigError, ScenarioError) as exc:
            raise HTTPException(422, str(exc))
        counter["next"] += 1
        sessions[session.id] = session
        if session.mode == "live":
            asyncio.get_running_loop().create_task(_live_loop(session))
        return {"id": session.id, "status": "paused"}

    @app.get("/sessions/{sid}")
    async def session_status(sid: str):
        return _get(sid).status()

    @app.post("/sessions/{sid}/context")
    async def submit_context(sid: str, body: dict):
        session = _get(sid)
        try:
            message = session.submit_context(str(body.get("text", "")))
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        return {"ok": True, "seq": message["seq"]}

    @app.post("/sessions/{sid}/plan")
    async def override_plan(sid: str, body: dict):
        session = _get(sid)
        labels = body.get("labels")
        if not isinstance(labels, list) or not labels:
            raise HTTPException(422, "body needs a non-empty 'labels' list")
        try:
            message = session.override_plan([str(l) for l in labels])
        except ValueError as exc:
            raise HTTPException(422, str(exc))
        return {"ok": True, "seq": message["seq"]}

    @app.post("/sessions/{sid}/pause")
    async def pause(sid: str):
        return {"ok": True, "seq": _get(sid).pause()["seq"]}

    @app.post("/sessions/{sid}/resume")
    async def resume(sid: str):
        return {"ok": True, "seq": _get(sid).resume()["seq"]}

    @app.post("/sessions/{sid}/advance")
    async def advance(sid: str, body: dict | None = None):
        session = _get(sid)
        if session.mode != "lockstep":
            raise HTTPException(409, "advance is only available in lockstep mode")
        steps = int((body or {}).get("steps", 1))
        if steps < 1:
            raise HTTPException(422, "steps must be >= 1")
        was_paused = session.paused
        session.paused = False
        ran = session.advance(steps)
        session.paused = was_paused
        return {"ok": True, "ran": ran, "step_index": session.step.info["step_index"],
                "done": session.done}

    @app.get("/sessions/{sid}/record")
    async def record(sid: str):
        return PlainTextResponse(_get(sid).record.to_ndjson(), media_type="application/x-ndjson")

    @app.delete("/sessions/{sid}")
    async def close_session(sid: str):
        session = _get(sid)
        session.close()
        del sessions[sid]
        return {"ok": True}

    @app.websocket("/sessions/{sid}/stream")
    async def stream(ws: WebSocket, sid: str):
        await ws.accept()
        session = sessions.get(sid)
        if session is None:
            await ws.send_json({"type": "event", "seq": 0, "payload": {"kind": "stream_end"}})
            await ws.close()
            return
        sent = 0
        try:
            while True:
                while sent < len(session.messages):
                    await ws.send_json(session.messages[sent])
                    sent += 1
                if session.closed or (session.done and sent == len(session.messages)):
                    if not session.closed:
                        await ws.send_json(
                            {"type": "event", "seq": session.seq + 1,
                             "payload": {"kind": "stream_end"}}
                        )
                    break
                await asyncio.sleep(0.01)
        except WebSocketDisconnect:
            return
        await ws.close()

    app.state.sessions = sessions
    return app
