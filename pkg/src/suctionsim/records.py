"""Episode records: newline-delimited JSON event streams and round-trips."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1


@dataclass
class EpisodeRecord:
    """Chronological event stream for one episode.

    Per-step series are parallel lists; blood-remaining fraction uses the
    cumulative spawned count as its denominator so it stays in [0, 1] under
    active bleeding.
    """

    scenario: dict
    module: str
    initial_active: int = 0
    active: list = field(default_factory=list)
    fraction: list = field(default_factory=list)
    tool: list = field(default_factory=list)       # [x, y, z] per step
    target: list = field(default_factory=list)     # label or None
    reward: list = field(default_factory=list)
    removed: list = field(default_factory=list)
    emitted: list = field(default_factory=list)
    bleeding_active: list = field(default_factory=list)  # origin-tagged count or None
    pools: list = field(default_factory=list)       # live pool labels per step
    plans: list = field(default_factory=list)      # {step, labels, provenance, raw, full_mask}
    events: list = field(default_factory=list)     # {step, type, ...}
    completed: bool = False
    tainted: bool = False

    def add_step(self, info: dict, reward_total: float) -> None:
        spawned = max(info["spawned"], 1)
        self.active.append(info["active"])
        self.fraction.append(info["active"] / spawned)
        self.tool.append(info["tool"])
        self.target.append(info["target"])
        self.reward.append(reward_total)
        self.removed.append(info["removed"])
        self.emitted.append(info["emitted"])
        self.bleeding_active.append(info["bleeding_active"])
        self.pools.append(info["pools"])

    def add_plan(self, step: int, plan) -> None:
        self.plans.append(
            {
                "step": step,
                "labels": list(plan.labels),
                "provenance": plan.provenance,
                "full_mask": plan.full_mask,
                "raw_response": plan.raw_response,
                "rationales": dict(plan.rationales),
            }
        )
        if plan.provenance == "RULE" and self.module in ("lrwoc", "lrwc"):
            self.tainted = True

    def steps(self) -> int:
        return len(self.active)

    def to_ndjson(self) -> str:
        lines = [
            json.dumps(
                {
                    "type": "meta",
                    "schema_version": SCHEMA_VERSION,
                    "module": self.module,
                    "scenario": self.scenario,
                    "initial_active": self.initial_active,
                },
                sort_keys=True,
            )
        ]
        for p in self.plans:
            lines.append(json.dumps({"type": "plan", **p}, sort_keys=True))
        for ev in self.events:
            lines.append(json.dumps({"type": "event", "data": ev}, sort_keys=True))
        for i in range(self.steps()):
            lines.append(
                json.dumps(
                    {
                        "type": "step",
                        "step": i,
                        "active": self.active[i],
                        "fraction": self.fraction[i],
                        "tool": self.tool[i],
                        "target": self.target[i],
                        "reward": self.reward[i],
                        "removed": self.removed[i],
                        "emitted": self.emitted[i],
                        "bleeding_active": self.bleeding_active[i],
                        "pools": self.pools[i],
                    },
                    sort_keys=True,
                )
            )
        lines.append(json.dumps({"type": "end", "completed": self.completed, "tainted": self.tainted}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_ndjson())

    @classmethod
    def from_ndjson(cls, text: str) -> "EpisodeRecord":
        record: EpisodeRecord | None = None
        for line in text.splitlines():
            if not line.strip():
                continue
            doc = json.loads(line)
            kind = doc.pop("type")
            if kind == "meta":
                record = cls(
                    scenario=doc["scenario"],
                    module=doc["module"],
                    initial_active=doc["initial_active"],
                )
            elif record is None:
                raise ValueError("record stream does not start with a meta event")
            elif kind == "plan":
                record.plans.append(doc)
            elif kind == "event":
                record.events.append(doc["data"])
            elif kind == "step":
                record.active.append(doc["active"])
                record.fraction.append(doc["fraction"])
                record.tool.append(doc["tool"])
                record.target.append(doc["target"])
                record.reward.append(doc["reward"])
                record.removed.append(doc["removed"])
                record.emitted.append(doc["emitted"])
                record.bleeding_active.append(doc["bleeding_active"])
                record.pools.append(doc["pools"])
            elif kind == "end":
                record.completed = doc["completed"]
                record.tainted = doc["tainted"]
        if record is None:
            raise ValueError("empty record stream")
        return record

    @classmethod
    def load(cls, path: str | Path) -> "EpisodeRecord":
        return cls.from_ndjson(Path(path).read_text())
