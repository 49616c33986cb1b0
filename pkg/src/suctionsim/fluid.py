"""Particle blood dynamics: gravity, packing relaxation, suction, capture.

The scheme is position-based: velocities are predicted with external
forces, particle positions are relaxed pairwise inside a neighbor radius,
projected out of the terrain and clot capsules, and velocities recomputed
from the positional change. Everything is vectorized over the active set
and fully deterministic for a fixed seed and action sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .config import PhysicsConfig
from .errors import ScenarioError, SimulationFault
from .scenario import ScenarioConfig
from .tissue import TissueSurface, surface_height


@dataclass(frozen=True)
class ClotCapsule:
    """Static rigid capsule lying on the tissue; particles cannot enter it."""

    p0: np.ndarray  # (3,)
    p1: np.ndarray  # (3,)
    radius: float
    pool_index: int

    def footprint_2d(self) -> tuple[np.ndarray, np.ndarray, float]:
        return self.p0[:2], self.p1[:2], self.radius


@dataclass
class BleedingEmitter:
    source: np.ndarray  # (3,)
    pool_index: int
    rate: int
    start_step: int
    end_step: int

    def active_at(self, step_index: int) -> bool:
        return self.start_step <= step_index <= self.end_step


@dataclass(frozen=True)
class StepOutcome:
    removed: int
    emitted: int
    active_count: int
    tool_pose: np.ndarray


class SimState:
    """Single-owner mutable particle state for one episode."""

    def __init__(
        self,
        capacity: int,
        surface: TissueSurface,
        physics: PhysicsConfig,
        rng: np.random.Generator,
        tool_pos: np.ndarray,
        emitters: list[BleedingEmitter] | None = None,
        clots: list[ClotCapsule] | None = None,
        distractor_pos: np.ndarray | None = None,
    ):
        self.capacity = capacity
        self.surface = surface
        self.physics = physics
        self.rng = rng
        self.pos = np.zeros((capacity, 3))
        self.vel = np.zeros((capacity, 3))
        self.active = np.zeros(capacity, dtype=bool)
        self.origin = np.full(capacity, -1, dtype=np.int32)
        self.spawned = 0
        self.step_index = 0
        self.total_emitted = 0
        self.total_removed = 0
        self.tool_pos = np.asarray(tool_pos, dtype=float).copy()
        self.suction_on = False
        self.emitters = emitters or []
        self.clots = clots or []
        self.distractor_pos = distractor_pos
        self.events: list[dict] = []

    @property
    def active_count(self) -> int:
        return int(self.active.sum())

    def active_by_origin(self, pool_index: int) -> int:
        return int((self.active & (self.origin == pool_index)).sum())

    @property
    def emission_pending(self) -> bool:
        """True while any emitter can still spawn blood in a future step."""
        if self.spawned >= len(self.pos):
            return False
        return any(em.end_step >= self.step_index for em in self.emitters)

    def spawn(self, points: np.ndarray, origin: int) -> int:
        """Activate up to len(points) reserve slots; returns how many fit."""
        n = min(len(points), self.capacity - self.spawned)
        if n <= 0:
            return 0
        sl = slice(self.spawned, self.spawned + n)
        self.pos[sl] = points[:n]
        self.vel[sl] = 0.0
        self.active[sl] = True
        self.origin[sl] = origin
        self.spawned += n
        return n


def init_scene(config: ScenarioConfig, surface: TissueSurface) -> SimState:
    """Spawn the configured pools above the terrain and pre-settle them.

    Pools settle with suction off for a fixed number of warm-up steps, then
    counters reset so the episode starts at step 0 with static pools.
    """
    physics = config.physics
    seed_seq = np.random.SeedSequence([config.seed & (2**64 - 1), config.env_id, 0xF1])
    spawn_ss, sim_ss = seed_seq.spawn(2)
    spawn_rng = np.random.default_rng(spawn_ss)

    radii = config.spawn_radii()
    centers = config.pool_centers
    for i in range(len(centers)):
        for j in range(i + 1, len(centers)):
            d = np.hypot(centers[i][0] - centers[j][0], centers[i][1] - centers[j][1])
            if d < radii[i] + radii[j]:
                raise ScenarioError(f"pool spawn discs {i} and {j} overlap")

    emitters = []
    if config.emitter:
        e = config.emitter
        cx, cy = centers[e.pool_index]
        z = float(surface_height(surface, cx, cy)) + 0.004
        emitters.append(BleedingEmitter(np.array([cx, cy, z]), e.pool_index, e.rate, e.start_step, e.end_step))

    clots = []
    if config.clot:
        c = config.clot
        z0 = float(surface_height(surface, *c.p0)) + 0.5 * c.radius
        z1 = float(surface_height(surface, *c.p1)) + 0.5 * c.radius
        clots.append(
            ClotCapsule(
                np.array([c.p0[0], c.p0[1], z0]),
                np.array([c.p1[0], c.p1[1], z1]),
                c.radius,
                c.pool_index,
            )
        )

    (x0, x1), (y0, y1) = config.extent
    tool_start = np.array([x0 + 0.08, y0 + 0.08, 0.0])
    tool_start[2] = float(surface_height(surface, tool_start[0], tool_start[1])) + physics.hover_height

    distractor = None
    if config.distractor_pos is not None:
        dx, dy = config.distractor_pos
        distractor = np.array([dx, dy, float(surface_height(surface, dx, dy))])

    state = SimState(
        capacity=config.capacity,
        surface=surface,
        physics=physics,
        rng=np.random.default_rng(sim_ss),
        tool_pos=tool_start,
        emitters=emitters,
        clots=clots,
        distractor_pos=distractor,
    )

    for i, ((cx, cy), n, r) in enumerate(zip(centers, config.particles_per_pool(), radii)):
        rad = r * np.sqrt(spawn_rng.uniform(0.0, 1.0, n))
        ang = spawn_rng.uniform(0.0, 2 * np.pi, n)
        px = cx + rad * np.cos(ang)
        py = cy + rad * np.sin(ang)
        pz = surface_height(surface, px, py) + physics.particle_radius + spawn_rng.uniform(0.0, 0.008, n)
        state.spawn(np.column_stack([px, py, pz]), origin=i)

    zero = np.zeros(3)
    for _ in range(physics.settle_steps):
        _advance(state, zero, physics.dt, allow_emit=False, allow_capture=False)

    # episode clock starts after settling
    state.step_index = 0
    state.total_emitted = 0
    state.total_removed = 0
    state.events = []
    state.vel[:] = 0.0
    return state


def compute_suction_force(state: SimState, tool_pose: np.ndarray | None = None) -> np.ndarray:
    """Per-particle suction acceleration; zeros when the suction flag is off.

    The field is a downward-opening spherical cone at the tool tip: inside
    the half-angle and range R the pull toward the tip scales linearly as
    strength * (1 - d / R), continuous (zero) at d = R.
    """
    forces = np.zeros_like(state.pos)
    if not state.suction_on:
        return forces
    p = state.physics
    tip = state.tool_pos if tool_pose is None else np.asarray(tool_pose, dtype=float)
    idx = np.flatnonzero(state.active)
    if idx.size == 0:
        return forces
    d = state.pos[idx] - tip
    dist = np.linalg.norm(d, axis=1)
    at_tip = dist < 1e-12
    safe = np.where(at_tip, 1.0, dist)
    cos = -d[:, 2] / safe
    inside = (dist <= p.suction_range) & ((cos >= p.cone_cos) | at_tip)
    mag = np.where(inside, p.suction_strength * (1.0 - dist / p.suction_range), 0.0)
    dirn = np.where(at_tip[:, None], np.array([0.0, 0.0, 1.0]), -d / safe[:, None])
    forces[idx] = dirn * mag[:, None]
    return forces


def remove_captured(state: SimState, tool_pose: np.ndarray | None = None) -> int:
    """Deactivate particles within the capture radius of the tip that sit
    above the local capture height threshold. Never reactivates."""
    p = state.physics
    tip = state.tool_pos if tool_pose is None else np.asarray(tool_pose, dtype=float)
    idx = np.flatnonzero(state.active)
    if idx.size == 0:
        return 0
    rel = state.pos[idx] - tip
    d = np.linalg.norm(rel, axis=1)
    near = d <= p.capture_radius
    floor = surface_height(state.surface, state.pos[idx, 0], state.pos[idx, 1])
    high = state.pos[idx, 2] >= floor + p.capture_height_offset
    caught_mask = near & high
    if state.suction_on:
        # the intake core: anything hugging the cone axis below the tip is
        # swallowed outright, including freshly emitted blood at the source
        below = rel[:, 2] < 0.0
        axial = -rel[:, 2] <= p.suction_range
        radial = np.hypot(rel[:, 0], rel[:, 1]) <= p.capture_core_radius
        caught_mask |= below & axial & radial
    caught = idx[caught_mask]
    if caught.size and state.clots:
        coagulated = np.zeros(caught.size, dtype=bool)
        xy = state.pos[caught, :2]
        for clot in state.clots:
            a, b = clot.p0[:2], clot.p1[:2]
            ab = b - a
            ab2 = float(ab @ ab)
            t = np.clip(((xy - a) @ ab) / ab2, 0.0, 1.0) if ab2 > 0 else np.zeros(caught.size)
            closest = a + t[:, None] * ab
            coagulated |= np.linalg.norm(xy - closest, axis=1) <= p.clot_influence_radius
        if coagulated.sum() > p.clot_capture_rate:
            # viscous extraction: only the few closest to the tip come free
            slow = caught[coagulated]
            order = np.argsort(d[caught_mask][coagulated], kind="stable")
            caught = np.concatenate([caught[~coagulated], slow[order[: p.clot_capture_rate]]])
    state.active[caught] = False
    state.total_removed += caught.size
    return int(caught.size)


def emit_bleeding(state: SimState) -> int:
    """Spawn reserve particles at every in-interval emitter; truncates at capacity."""
    emitted = 0
    for em in state.emitters:
        if not em.active_at(state.step_index):
            continue
        jitter = state.rng.normal(0.0, 0.004, size=(em.rate, 3))
        jitter[:, 2] = state.rng.uniform(0.0, 0.004, em.rate)
        pts = em.source + jitter
        n = state.spawn(pts, origin=em.pool_index)
        if n < em.rate:
            state.events.append(
                {"step": state.step_index, "type": "emission_truncated",
                 "requested": em.rate, "spawned": n}
            )
        emitted += n
    state.total_emitted += emitted
    return emitted


def _relax_and_project(state: SimState, idx: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Pairwise packing relaxation plus terrain/clot projection; returns a contact mask."""
    p = state.physics
    n = len(pos)
    if n > 1:
        pairs = cKDTree(pos).query_pairs(p.neighbor_radius, output_type="ndarray")
        if len(pairs):
            i, j = pairs[:, 0], pairs[:, 1]
            for _ in range(p.relaxation_iterations):
                d = pos[i] - pos[j]
                dist = np.sqrt(np.einsum("ij,ij->i", d, d))
                dist = np.maximum(dist, 1e-9)
                gain = np.where(
                    dist < p.rest_distance,
                    0.5 * p.push_stiffness * (p.rest_distance - dist),
                    -0.5 * p.cohesion_stiffness * (dist - p.rest_distance),
                ) / dist
                delta = d * gain[:, None]
                corr = np.empty_like(pos)
                for k in range(3):
                    corr[:, k] = np.bincount(i, weights=delta[:, k], minlength=n)
                    corr[:, k] -= np.bincount(j, weights=delta[:, k], minlength=n)
                norms = np.sqrt(np.einsum("ij,ij->i", corr, corr))
                over = norms > p.max_correction
                if over.any():
                    corr[over] *= (p.max_correction / norms[over])[:, None]
                pos += corr

    floor = surface_height(state.surface, pos[:, 0], pos[:, 1]) + p.particle_radius
    contact = pos[:, 2] < floor
    pos[contact, 2] = floor[contact]

    for clot in state.clots:
        a, b = clot.p0, clot.p1
        ab = b - a
        ab2 = float(ab @ ab)
        t = np.clip(((pos - a) @ ab) / ab2, 0.0, 1.0) if ab2 > 0 else np.zeros(len(pos))
        closest = a + t[:, None] * ab
        dv = pos - closest
        dist = np.linalg.norm(dv, axis=1)
        r = clot.radius + p.particle_radius
        inside = dist < r
        if inside.any():
            safe = np.maximum(dist[inside], 1e-9)
            pos[inside] = closest[inside] + dv[inside] / safe[:, None] * r
    return contact


def _advance(
    state: SimState,
    action: np.ndarray,
    dt: float,
    allow_emit: bool = True,
    allow_capture: bool = True,
) -> StepOutcome:
    p = state.physics
    a = np.clip(np.asarray(action, dtype=float), -p.max_tool_step, p.max_tool_step)
    state.tool_pos = state.tool_pos + a

    emitted = emit_bleeding(state) if allow_emit else 0

    idx = np.flatnonzero(state.active)
    if idx.size:
        pos = state.pos[idx].copy()
        vel = state.vel[idx].copy()
        prev = pos.copy()

        accel = compute_suction_force(state)[idx]
        accel[:, 2] -= p.gravity
        vel = (vel + accel * dt) * p.damping
        speed = np.sqrt(np.einsum("ij,ij->i", vel, vel))
        fast = speed > p.max_speed
        if fast.any():
            vel[fast] *= (p.max_speed / speed[fast])[:, None]
        pos += vel * dt

        if not np.isfinite(pos).all():
            raise SimulationFault(state.step_index)
        contact = _relax_and_project(state, idx, pos)

        vel = (pos - prev) / dt
        vel[contact] *= p.contact_damping

        # airborne particles outside the suction cone carry no useful
        # momentum: bleed off their lateral speed so ejecta from the packed
        # intake column rains back beside the pool instead of scattering
        airborne = pos[:, 2] > (
            surface_height(state.surface, pos[:, 0], pos[:, 1])
            + p.particle_radius
            + p.airborne_clearance
        )
        rel = pos - state.tool_pos
        dist = np.sqrt(np.einsum("ij,ij->i", rel, rel))
        safe = np.maximum(dist, 1e-12)
        in_cone = state.suction_on & (dist <= p.suction_range) & (-rel[:, 2] / safe >= p.cone_cos)
        stray = airborne & ~in_cone
        if stray.any():
            lat = np.sqrt(np.einsum("ij,ij->i", vel[stray, :2], vel[stray, :2]))
            over = lat > p.stray_lateral_speed
            if over.any():
                sel = np.flatnonzero(stray)[over]
                vel[sel, :2] *= (p.stray_lateral_speed / lat[over])[:, None]

        if not (np.isfinite(pos).all() and np.isfinite(vel).all()):
            raise SimulationFault(state.step_index)
        state.pos[idx] = pos
        state.vel[idx] = vel

    removed = remove_captured(state) if allow_capture else 0
    state.step_index += 1
    return StepOutcome(removed, emitted, state.active_count, state.tool_pos.copy())


def step_simulation(state: SimState, action: np.ndarray, dt: float | None = None) -> StepOutcome:
    """Advance one step: tool, emission, forces, relaxation, projection, capture."""
    p = state.physics
    step_dt = p.dt if dt is None else dt
    if step_dt <= 0:
        raise ValueError(f"dt must be positive, got {step_dt}")
    return _advance(state, action, step_dt)
