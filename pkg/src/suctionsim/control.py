"""Low-level motion layer: episodic environment contract and scripted policy.

The environment exposes the reset/step/observation/action/reward surface an
external RL trainer would attach to; a proportional scripted controller
ships in its place. Reward per transition: particles removed, plus a
terminal bonus of C1 on full clearance, minus C2 times the action norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .config import PhysicsConfig
from .errors import PlanExhausted, SuctionSimError
from .fluid import SimState, init_scene, step_simulation
from .perception import (
    BinaryMask,
    Observation,
    ObservationBuilder,
    PoolTracker,
    annotate_scene,
    rasterize_mask,
    target_mask,
)
from .reasoning import (
    PromptBundle,
    PriorityPlan,
    build_prompt,
    plan as dispatch_plan,
    should_replan,
)
from .scenario import ScenarioConfig
from .tissue import generate_surface, sample_heightmap

TERMINAL_BONUS = 5.0   # C1
ACTION_PENALTY = 0.02  # C2


@dataclass(frozen=True)
class RewardTerms:
    removed: int
    terminal_bonus: float
    action_penalty: float

    @property
    def total(self) -> float:
        return self.removed + self.terminal_bonus - self.action_penalty


def compute_reward(n_before: int, n_after: int, action) -> RewardTerms:
    """Removed count, full-clearance bonus, and movement penalty."""
    if n_before < 0 or n_after < 0:
        raise ValueError(f"negative particle counts ({n_before}, {n_after})")
    norm = float(np.linalg.norm(np.asarray(action, dtype=float)))
    return RewardTerms(
        removed=n_before - n_after,
        terminal_bonus=TERMINAL_BONUS if n_after == 0 else 0.0,
        action_penalty=ACTION_PENALTY * norm,
    )


@dataclass(frozen=True)
class PolicyCommand:
    action: np.ndarray
    suction_on: bool
    mask_exhausted: bool = False


class ScriptedPolicy:
    """Proportional controller over the target mask.

    Moves horizontally toward the centroid of the nearest connected blob of
    the target mask (for a single-pool mask that is the mask centroid),
    descends to hover height, and engages suction when close enough for the
    cone to cover the blob.
    """

    def __init__(self, physics: PhysicsConfig | None = None):
        self.physics = physics or PhysicsConfig()

    def act(self, observation: Observation) -> PolicyCommand:
        p = self.physics
        mask = observation.current_mask
        tool = observation.tool_position
        if not mask.any():
            return PolicyCommand(np.zeros(3), suction_on=False, mask_exhausted=True)

        labeled, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
        (x0, x1), (y0, y1) = observation.extent
        rows, cols = mask.shape
        best = None
        for k in range(1, n + 1):
            rr, cc = np.nonzero(labeled == k)
            cx = x0 + (cc.mean() + 0.5) / cols * (x1 - x0)
            cy = y0 + (rr.mean() + 0.5) / rows * (y1 - y0)
            d = np.hypot(cx - tool[0], cy - tool[1])
            if best is None or d < best[0]:
                best = (d, cx, cy)
        dist, cx, cy = best

        z_des = observation.height_map.height_at(tool[0], tool[1]) + p.hover_height
        raw = np.array([cx - tool[0], cy - tool[1], z_des - tool[2]])
        norm = float(np.linalg.norm(raw))
        if norm > p.max_tool_step:
            raw *= p.max_tool_step / norm
        return PolicyCommand(raw, suction_on=dist <= p.engage_radius)


@dataclass
class EnvStep:
    observation: Observation
    reward: RewardTerms
    done: bool
    info: dict


class SuctionEnv:
    """One episode: tissue, particles, perception, plan progression, reward.

    Target selection holds the current pool until it is cleared; a replan
    preempts it only when a different pool turns out to be bleeding or the
    operator overrides the plan.
    """

    def __init__(self, scenario: ScenarioConfig, backend, policy_seed: int | None = None):
        self.scenario = scenario
        self.backend = backend
        self.seed = scenario.seed if policy_seed is None else policy_seed
        self.surface = None
        self.state: SimState | None = None
        self.done = True
        self._operator_context: str | None = None
        self._operator_plan: PriorityPlan | None = None
        # set when fresh context arrives; consumed by the next replan so the
        # context augments every later prompt without forcing replans forever
        self._context_pending = False

    # -- operator hooks (used by the session service) ------------------

    def submit_context(self, text: str) -> None:
        if not text or not text.strip():
            raise ValueError("empty operator context")
        self._operator_context = text
        self._context_pending = True

    def override_plan(self, labels: list[str]) -> PriorityPlan:
        live = [p.label for p in self.pools]
        unknown = [l for l in labels if l not in live]
        if unknown:
            raise ValueError(f"unknown pool labels {unknown}; live pools: {live}")
        self._operator_plan = PriorityPlan(tuple(labels), provenance="OPERATOR")
        return self._operator_plan

    # -- episode contract ----------------------------------------------

    def reset(self) -> EnvStep:
        sc = self.scenario
        self.surface = generate_surface(
            sc.seed, sc.surface_degree, sc.surface_degree, sc.extent, sc.surface_amplitude
        )
        self.state = init_scene(sc, self.surface)
        rows, cols = sc.perception.mask_rows, sc.perception.mask_cols
        self.heightmap = sample_heightmap(self.surface, (rows, cols))
        self.tracker = PoolTracker(sc.perception)
        self.builder = ObservationBuilder(self.heightmap)
        self.initial_active = self.state.active_count
        self.plans: list[PriorityPlan] = []
        self.events: list[dict] = []
        self.done = False
        self.target_label: str | None = None
        self._full_mask_fallback = False
        self._hold_remaining = 0

        self.mask = rasterize_mask(self.state, (rows, cols))
        self.pools = self.tracker.update(self.mask, self.state)
        self._replan(initial=True)
        tmask = self._target_mask()
        obs = self.builder.push(tmask, self.state.tool_pos)
        return EnvStep(
            observation=obs,
            reward=RewardTerms(0, 0.0, 0.0),
            done=False,
            info=self._info(removed=0, emitted=0),
        )

    def _bundle(self, context: str | None) -> PromptBundle:
        image = None
        if getattr(self.backend, "needs_image", False):
            image = annotate_scene(self.state, self.pools, self.heightmap)
        return build_prompt(self.pools, context=context, image=image)

    def _replan(self, initial: bool = False) -> None:
        if not self.pools:
            self.plan = self.plans[-1] if self.plans else PriorityPlan((), provenance="RULE")
            return
        if self._operator_plan is not None:
            self.plan = self._operator_plan
            self._operator_plan = None
        else:
            backend = self.backend
            if self._operator_context:
                backend = backend.with_context(self._operator_context)
            bundle = self._bundle(self._operator_context)
            self.plan = dispatch_plan(backend, bundle, seed=self.seed)
            for ev in getattr(backend, "events", []):
                ev = dict(ev)
                ev["step"] = self.state.step_index
                self.events.append(ev)
            if getattr(backend, "events", None):
                backend.events.clear()
        self._context_pending = False
        self.plans.append(self.plan)
        if initial or self.plan.full_mask:
            self.target_label = self._first_surviving(self.plan)
            return
        # target hold: keep the current pool unless it vanished, an operator
        # ordered otherwise, or another pool is bleeding and it is not
        new_first = self._first_surviving(self.plan)
        live = {p.label: p for p in self.pools}
        current_alive = self.target_label in live
        if self.plan.provenance == "OPERATOR":
            self.target_label = new_first
        elif not current_alive:
            if not self._holding():
                self.target_label = new_first
        elif new_first is not None and new_first != self.target_label:
            cur = live[self.target_label]
            new = live.get(new_first)
            if new is not None and new.bleeding and not cur.bleeding:
                self.target_label = new_first
        self._full_mask_fallback = False

    #: how long a target survives a detection dropout while blood remains
    #: near the tool: the gulp in progress finishes (or a bleeding site
    #: refills) instead of the tool abandoning it mid-lift
    TARGET_HOLD_STEPS = 60
    HOLD_RADIUS = 0.12

    def _holding(self) -> bool:
        if self.target_label is None or self._hold_remaining <= 0:
            return False
        if self.target_label in {p.label for p in self.pools}:
            return False
        return self._mask_near_tool()

    def _mask_near_tool(self) -> bool:
        rr, cc = np.nonzero(self.mask.grid)
        if rr.size == 0:
            return False
        centers = self.mask.cell_centers(rr, cc)
        d = np.hypot(centers[:, 0] - self.state.tool_pos[0], centers[:, 1] - self.state.tool_pos[1])
        return bool(d.min() <= self.HOLD_RADIUS)

    def _first_surviving(self, plan: PriorityPlan) -> str | None:
        if plan.full_mask:
            return None
        live = {p.label for p in self.pools}
        for label in plan.labels:
            if label in live:
                return label
        return None

    def _target_mask(self) -> BinaryMask:
        if self.plan.full_mask or self._full_mask_fallback:
            return BinaryMask(self.mask.grid.copy(), self.mask.extent)
        if self._holding():
            return BinaryMask(np.zeros_like(self.mask.grid), self.mask.extent)
        if self.target_label is not None:
            for pool in self.pools:
                if pool.label == self.target_label:
                    return BinaryMask(pool.grid.copy(), self.mask.extent)
        try:
            return target_mask(self.mask, self.pools, self.plan)
        except PlanExhausted:
            # planned pools are gone but particles remain: expose the scene
            self.events.append({"step": self.state.step_index, "type": "plan_exhausted"})
            self._full_mask_fallback = True
            return BinaryMask(self.mask.grid.copy(), self.mask.extent)

    def step(self, command) -> EnvStep:
        if self.done:
            raise SuctionSimError("episode is done; call reset()")
        sc = self.scenario
        if isinstance(command, PolicyCommand):
            action = command.action
            self.state.suction_on = command.suction_on
        else:
            action = np.asarray(command, dtype=float)
            self.state.suction_on = self._auto_engage()
        if self._holding():
            # finish the gulp: the lifted column is right under the tip
            action = np.zeros(3)
            self.state.suction_on = True
        n_before = self.state.active_count
        outcome = step_simulation(self.state, action)

        rows, cols = sc.perception.mask_rows, sc.perception.mask_cols
        self.mask = rasterize_mask(self.state, (rows, cols))
        prev_pools = self.pools
        self.pools = self.tracker.update(self.mask, self.state)

        operator_event = self._context_pending or self._operator_plan is not None
        if should_replan(prev_pools, self.pools, operator_event) and self.pools:
            self._replan()
        live = {p.label: p for p in self.pools}
        if self.target_label in live:
            self._hold_remaining = self.TARGET_HOLD_STEPS
        elif self.target_label is not None:
            if self._holding():
                self._hold_remaining -= 1
            else:
                self.target_label = self._first_surviving(self.plan)
                self._hold_remaining = self.TARGET_HOLD_STEPS if self.target_label else 0

        tmask = self._target_mask()
        obs = self.builder.push(tmask, self.state.tool_pos)
        reward = compute_reward(n_before, outcome.active_count, action)
        cleared = outcome.active_count == 0 and not self.state.emission_pending
        self.done = cleared or self.state.step_index >= sc.step_budget
        return EnvStep(
            observation=obs,
            reward=reward,
            done=self.done,
            info=self._info(removed=outcome.removed, emitted=outcome.emitted),
        )

    def _auto_engage(self) -> bool:
        tmask = self._target_mask()
        if not tmask.grid.any():
            return False
        rr, cc = np.nonzero(tmask.grid)
        centers = tmask.cell_centers(rr, cc)
        d = np.hypot(centers[:, 0] - self.state.tool_pos[0], centers[:, 1] - self.state.tool_pos[1])
        return bool(d.min() <= self.scenario.physics.engage_radius)

    def _info(self, removed: int, emitted: int) -> dict:
        st = self.state
        bleeding_active = None
        if st.emitters:
            bleeding_active = st.active_by_origin(st.emitters[0].pool_index)
        return {
            "step_index": st.step_index,
            "removed": removed,
            "emitted": emitted,
            "active": st.active_count,
            "spawned": st.spawned,
            "target": self.target_label if not self.plan.full_mask else None,
            "full_mask": bool(self.plan.full_mask or self._full_mask_fallback),
            "bleeding_active": bleeding_active,
            "pools": [p.label for p in self.pools],
            "tool": [float(v) for v in st.tool_pos],
        }
