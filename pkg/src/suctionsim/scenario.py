"""Scenario generation and the versioned scenario config file format.

Environment composition:
  1 - independent pools only
  2 - one pool bleeds for a fixed step interval
  3 - one capsule clot sits next to one pool
  4 - one bleeding pool plus a clot near a different pool
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import (
    DEFAULT_EXTENT,
    DEFAULT_SURFACE_AMPLITUDE,
    DEFAULT_SURFACE_DEGREE,
    PerceptionConfig,
    PhysicsConfig,
)
from .errors import ConfigError

SCHEMA_VERSION = 1

POOL_MARGIN = 0.16
POOL_MIN_SEPARATION = 0.30
SPAWN_RADIUS_BASE = 0.05

DEFAULT_EMITTER_RATE = 2
DEFAULT_EMITTER_INTERVAL = (0, 400)


@dataclass(frozen=True)
class EmitterSpec:
    pool_index: int
    rate: int = DEFAULT_EMITTER_RATE
    start_step: int = DEFAULT_EMITTER_INTERVAL[0]
    end_step: int = DEFAULT_EMITTER_INTERVAL[1]

    @property
    def max_emitted(self) -> int:
        return self.rate * (self.end_step - self.start_step + 1)


@dataclass(frozen=True)
class ClotSpec:
    pool_index: int
    p0: tuple[float, float]
    p1: tuple[float, float]
    radius: float = 0.02


@dataclass(frozen=True)
class ScenarioConfig:
    env_id: int
    seed: int
    pool_count: int = 4
    pool_centers: tuple[tuple[float, float], ...] = ()
    pool_shares: tuple[float, ...] = ()
    total_particles: int = 4000
    emitter: EmitterSpec | None = None
    clot: ClotSpec | None = None
    distractor_tool: bool = False
    distractor_pos: tuple[float, float] | None = None
    surface_degree: int = DEFAULT_SURFACE_DEGREE
    surface_amplitude: float = DEFAULT_SURFACE_AMPLITUDE
    extent: tuple[tuple[float, float], tuple[float, float]] = DEFAULT_EXTENT
    step_budget: int = 3000
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)

    def __post_init__(self):
        if self.env_id not in (1, 2, 3, 4):
            raise ConfigError(f"environment id {self.env_id} outside 1..4")
        if self.pool_count < 1:
            raise ConfigError("need at least one pool")
        if self.env_id == 1 and (self.emitter or self.clot):
            raise ConfigError("environment 1 carries no emitter or clot")
        if self.env_id == 2 and (self.emitter is None or self.clot is not None):
            raise ConfigError("environment 2 needs exactly one emitter and no clot")
        if self.env_id == 3 and (self.clot is None or self.emitter is not None):
            raise ConfigError("environment 3 needs exactly one clot and no emitter")
        if self.env_id == 4:
            if self.emitter is None or self.clot is None:
                raise ConfigError("environment 4 needs one emitter and one clot")
            if self.emitter.pool_index == self.clot.pool_index:
                raise ConfigError("environment 4 emitter and clot must sit on distinct pools")

    @property
    def initial_particles(self) -> int:
        reserve = self.emitter.max_emitted if self.emitter else 0
        return self.total_particles - min(reserve, self.total_particles // 2)

    @property
    def capacity(self) -> int:
        return self.total_particles

    def particles_per_pool(self) -> list[int]:
        shares = self.pool_shares or tuple(1.0 / self.pool_count for _ in range(self.pool_count))
        counts = [int(self.initial_particles * s) for s in shares]
        counts[0] += self.initial_particles - sum(counts)
        return counts

    def spawn_radii(self) -> list[float]:
        counts = self.particles_per_pool()
        mean = self.initial_particles / self.pool_count
        return [SPAWN_RADIUS_BASE * float(np.sqrt(c / mean)) for c in counts]

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "env_id": self.env_id,
            "seed": self.seed,
            "pool_count": self.pool_count,
            "pool_centers": [list(c) for c in self.pool_centers],
            "pool_shares": list(self.pool_shares),
            "total_particles": self.total_particles,
            "emitter": None,
            "clot": None,
            "distractor_tool": self.distractor_tool,
            "distractor_pos": list(self.distractor_pos) if self.distractor_pos else None,
            "surface_degree": self.surface_degree,
            "surface_amplitude": self.surface_amplitude,
            "extent": [list(self.extent[0]), list(self.extent[1])],
            "step_budget": self.step_budget,
            "physics": self.physics.to_dict(),
            "perception": self.perception.to_dict(),
        }
        if self.emitter:
            d["emitter"] = {
                "pool_index": self.emitter.pool_index,
                "rate": self.emitter.rate,
                "start_step": self.emitter.start_step,
                "end_step": self.emitter.end_step,
            }
        if self.clot:
            d["clot"] = {
                "pool_index": self.clot.pool_index,
                "p0": list(self.clot.p0),
                "p1": list(self.clot.p1),
                "radius": self.clot.radius,
            }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported scenario schema version {d.get('schema_version')}")
        emitter = None
        if d.get("emitter"):
            e = d["emitter"]
            emitter = EmitterSpec(e["pool_index"], e["rate"], e["start_step"], e["end_step"])
        clot = None
        if d.get("clot"):
            c = d["clot"]
            clot = ClotSpec(c["pool_index"], tuple(c["p0"]), tuple(c["p1"]), c["radius"])
        return cls(
            env_id=d["env_id"],
            seed=d["seed"],
            pool_count=d["pool_count"],
            pool_centers=tuple(tuple(c) for c in d["pool_centers"]),
            pool_shares=tuple(d["pool_shares"]),
            total_particles=d["total_particles"],
            emitter=emitter,
            clot=clot,
            distractor_tool=d.get("distractor_tool", False),
            distractor_pos=tuple(d["distractor_pos"]) if d.get("distractor_pos") else None,
            surface_degree=d["surface_degree"],
            surface_amplitude=d["surface_amplitude"],
            extent=(tuple(d["extent"][0]), tuple(d["extent"][1])),
            step_budget=d["step_budget"],
            physics=PhysicsConfig.from_dict(d["physics"]),
            perception=PerceptionConfig.from_dict(d["perception"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _place_pool_centers(rng: np.random.Generator, count: int, extent) -> list[tuple[float, float]]:
    (x0, x1), (y0, y1) = extent
    lo_x, hi_x = x0 + POOL_MARGIN, x1 - POOL_MARGIN
    lo_y, hi_y = y0 + POOL_MARGIN, y1 - POOL_MARGIN
    for _ in range(200):
        pts = np.column_stack(
            [rng.uniform(lo_x, hi_x, count), rng.uniform(lo_y, hi_y, count)]
        )
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        if (d[np.triu_indices(count, 1)] >= POOL_MIN_SEPARATION).all():
            return [tuple(p) for p in pts]
    # rejection failed: fall back to a jittered grid, still seeded
    side = int(np.ceil(np.sqrt(count)))
    gx = np.linspace(lo_x, hi_x, side)
    gy = np.linspace(lo_y, hi_y, side)
    pts = [(x, y) for y in gy for x in gx][:count]
    jit = rng.uniform(-0.02, 0.02, size=(count, 2))
    return [(p[0] + j[0], p[1] + j[1]) for p, j in zip(pts, jit)]


def _draw_shares(rng: np.random.Generator, count: int) -> tuple[float, ...]:
    for _ in range(100):
        s = rng.dirichlet(np.full(count, 4.0))
        if count == 1 or ((s >= 0.10) & (s <= 0.45)).all():
            return tuple(float(v) for v in s)
    return tuple(1.0 / count for _ in range(count))


def generate_scenario(
    env_id: int,
    seed: int,
    pool_count: int = 4,
    total_particles: int = 4000,
    distractor_tool: bool = False,
    physics: PhysicsConfig | None = None,
    perception: PerceptionConfig | None = None,
    step_budget: int = 3000,
) -> ScenarioConfig:
    """Seeded scene draw: pool layout, sizes, and env-specific emitter/clot placement."""
    if env_id not in (1, 2, 3, 4):
        raise ConfigError(f"environment id {env_id} outside 1..4")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), env_id, 0x5CE2]))
    extent = DEFAULT_EXTENT
    centers = _place_pool_centers(rng, pool_count, extent)
    shares = _draw_shares(rng, pool_count)

    emitter = None
    clot = None
    if env_id in (2, 4):
        emitter = EmitterSpec(pool_index=int(rng.integers(pool_count)))
    if env_id in (3, 4):
        choices = [i for i in range(pool_count) if emitter is None or i != emitter.pool_index]
        pool_index = int(rng.choice(choices))
        cx, cy = centers[pool_index]
        ang = rng.uniform(0, 2 * np.pi)
        # the clot lies within its pool so the coagulated region covers it
        off = 0.02
        mid = np.array([cx + off * np.cos(ang), cy + off * np.sin(ang)])
        axis = rng.uniform(0, 2 * np.pi)
        half = 0.03
        p0 = mid + half * np.array([np.cos(axis), np.sin(axis)])
        p1 = mid - half * np.array([np.cos(axis), np.sin(axis)])
        clot = ClotSpec(pool_index, (float(p0[0]), float(p0[1])), (float(p1[0]), float(p1[1])))

    distractor_pos = None
    if distractor_tool:
        near = int(rng.integers(pool_count))
        ang = rng.uniform(0, 2 * np.pi)
        cx, cy = centers[near]
        distractor_pos = (float(cx + 0.09 * np.cos(ang)), float(cy + 0.09 * np.sin(ang)))

    return ScenarioConfig(
        env_id=env_id,
        seed=int(seed),
        pool_count=pool_count,
        pool_centers=tuple(centers),
        pool_shares=shares,
        total_particles=total_particles,
        emitter=emitter,
        clot=clot,
        distractor_tool=distractor_tool,
        distractor_pos=distractor_pos,
        step_budget=step_budget,
        physics=physics or PhysicsConfig(),
        perception=perception or PerceptionConfig(),
    )
