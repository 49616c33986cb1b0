"""Particle dynamics: determinism, conservation, suction, capture, emission."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from suctionsim.errors import ScenarioError, SimulationFault
from suctionsim.fluid import (
    BleedingEmitter,
    ClotCapsule,
    SimState,
    compute_suction_force,
    emit_bleeding,
    init_scene,
    remove_captured,
    step_simulation,
)
from suctionsim.scenario import EmitterSpec, generate_scenario
from suctionsim.tissue import generate_surface, surface_height


def make_scene(env_id=1, seed=3, particles=300, **kw):
    sc = generate_scenario(env_id, seed, total_particles=particles, **kw)
    surface = generate_surface(
        sc.seed, sc.surface_degree, sc.surface_degree, sc.extent, sc.surface_amplitude
    )
    return sc, surface, init_scene(sc, surface)


def bare_state(surface=None, physics=None, capacity=16, tool=(0.5, 0.5, 0.5), **kw):
    sc = generate_scenario(1, 0, total_particles=10)
    surface = surface or generate_surface(0)
    physics = physics or sc.physics
    rng = np.random.default_rng(0)
    return SimState(capacity, surface, physics, rng, np.array(tool, dtype=float), **kw)


class TestInitScene:
    def test_settled_pools_are_static(self):
        _, _, state = make_scene()
        before = state.pos.copy()
        step_simulation(state, np.zeros(3))
        moved = np.linalg.norm(state.pos[state.active] - before[state.active], axis=1)
        assert moved.max() < 5e-3

    def test_counters_reset_after_settling(self):
        _, _, state = make_scene()
        assert state.step_index == 0
        assert state.total_emitted == 0
        assert state.total_removed == 0
        assert not state.events
        assert np.all(state.vel == 0.0)

    def test_particles_rest_on_surface(self):
        _, surface, state = make_scene()
        p = state.pos[state.active]
        floor = surface_height(surface, p[:, 0], p[:, 1])
        assert np.all(p[:, 2] >= floor - 1e-9)

    def test_overlapping_spawn_discs_rejected(self):
        sc = generate_scenario(1, 3, total_particles=300)
        sc = dataclasses.replace(
            sc, pool_centers=tuple([sc.pool_centers[0]] * sc.pool_count)
        )
        surface = generate_surface(sc.seed)
        with pytest.raises(ScenarioError):
            init_scene(sc, surface)

    def test_identical_seeds_identical_states(self):
        _, _, a = make_scene(seed=9)
        _, _, b = make_scene(seed=9)
        assert np.array_equal(a.pos, b.pos)
        assert np.array_equal(a.active, b.active)
        assert np.array_equal(a.origin, b.origin)

    def test_different_seeds_differ(self):
        _, _, a = make_scene(seed=9)
        _, _, b = make_scene(seed=10)
        assert not np.array_equal(a.pos, b.pos)


class TestDeterminism:
    def test_bitwise_identical_trajectories(self):
        rng = np.random.default_rng(42)
        actions = rng.uniform(-0.01, 0.01, size=(40, 3))
        results = []
        for _ in range(2):
            _, _, state = make_scene(env_id=2, seed=5)
            state.suction_on = True
            for a in actions:
                step_simulation(state, a)
            results.append((state.pos.copy(), state.vel.copy(), state.active.copy()))
        assert np.array_equal(results[0][0], results[1][0])
        assert np.array_equal(results[0][1], results[1][1])
        assert np.array_equal(results[0][2], results[1][2])


class TestLedger:
    def test_particle_counts_balance_every_step(self):
        _, _, state = make_scene(env_id=2, seed=7, particles=400)
        initial = state.active_count
        state.suction_on = True
        emitted = removed = 0
        rng = np.random.default_rng(1)
        for _ in range(120):
            out = step_simulation(state, rng.uniform(-0.01, 0.01, 3))
            emitted += out.emitted
            removed += out.removed
            assert out.active_count == initial + emitted - removed
            assert state.total_emitted == emitted
            assert state.total_removed == removed

    def test_capture_never_reactivates(self):
        _, _, state = make_scene(env_id=1, seed=7)
        state.suction_on = True
        # park the tool over the densest pool and drain it
        live = state.pos[state.active]
        state.tool_pos = live.mean(axis=0) + np.array([0.0, 0.0, 0.05])
        dead = set()
        for _ in range(200):
            step_simulation(state, np.zeros(3))
            now_dead = set(np.flatnonzero(~state.active))
            assert dead <= now_dead
            dead = now_dead


class TestSuctionForce:
    def test_matches_scalar_oracle(self):
        state = bare_state()
        p = state.physics
        rng = np.random.default_rng(11)
        state.pos[:] = state.tool_pos + rng.uniform(-0.4, 0.4, size=(16, 3))
        state.active[:] = True
        state.suction_on = True
        forces = compute_suction_force(state)
        half_cos = math.cos(math.radians(30.0))
        for i in range(16):
            d = state.pos[i] - state.tool_pos
            dist = math.sqrt(d[0] ** 2 + d[1] ** 2 + d[2] ** 2)
            expect = np.zeros(3)
            if dist > 1e-12 and dist <= p.suction_range and (-d[2] / dist) >= half_cos:
                mag = p.suction_strength * (1.0 - dist / p.suction_range)
                expect = (-d / dist) * mag
            assert np.abs(forces[i] - expect).max() < 1e-12

    def test_zero_when_suction_off(self):
        state = bare_state()
        state.pos[:] = state.tool_pos - np.array([0.0, 0.0, 0.1])
        state.active[:] = True
        state.suction_on = False
        assert np.all(compute_suction_force(state) == 0.0)

    def test_continuous_at_range_boundary(self):
        state = bare_state()
        p = state.physics
        state.active[:2] = True
        state.suction_on = True
        state.pos[0] = state.tool_pos - np.array([0.0, 0.0, p.suction_range - 1e-9])
        state.pos[1] = state.tool_pos - np.array([0.0, 0.0, p.suction_range + 1e-9])
        f = compute_suction_force(state)
        assert np.linalg.norm(f[0]) < 1e-6
        assert np.all(f[1] == 0.0)

    def test_outside_half_angle_ignored(self):
        state = bare_state()
        state.active[:1] = True
        state.suction_on = True
        # 45 degrees off axis, well outside the 30-degree cone
        state.pos[0] = state.tool_pos + np.array([0.1, 0.0, -0.1])
        assert np.all(compute_suction_force(state) == 0.0)

    def test_inactive_particles_unaffected(self):
        state = bare_state()
        state.pos[:] = state.tool_pos - np.array([0.0, 0.0, 0.1])
        state.active[:] = False
        state.suction_on = True
        assert np.all(compute_suction_force(state) == 0.0)


class TestCapture:
    def test_sphere_capture_needs_height(self):
        state = bare_state(tool=(0.5, 0.5, 0.3))
        p = state.physics
        floor = float(surface_height(state.surface, 0.5, 0.5))
        state.active[:2] = True
        state.pos[0] = [0.5, 0.5, state.tool_pos[2] - 0.5 * p.capture_radius]
        state.pos[1] = [0.5, 0.5, floor + 0.5 * p.capture_height_offset]
        n = remove_captured(state)
        assert n == 1
        assert not state.active[0]
        assert state.active[1]

    def test_core_capture_requires_suction(self):
        state = bare_state(tool=(0.5, 0.5, 0.6))
        p = state.physics
        state.active[:1] = True
        state.pos[0] = state.tool_pos - np.array([0.0, 0.0, 0.5 * p.suction_range])
        state.suction_on = False
        assert remove_captured(state) == 0
        state.suction_on = True
        assert remove_captured(state) == 1

    def test_core_capture_radial_and_axial_limits(self):
        state = bare_state(tool=(0.5, 0.5, 0.6))
        p = state.physics
        state.suction_on = True
        state.active[:3] = True
        state.pos[0] = state.tool_pos + np.array([p.capture_core_radius * 2, 0.0, -0.2])
        state.pos[1] = state.tool_pos + np.array([0.0, 0.0, -p.suction_range - 0.01])
        state.pos[2] = state.tool_pos + np.array([0.0, 0.0, 0.2])  # above the tip
        assert remove_captured(state) == 0

    def test_clot_throttle_caps_per_step(self):
        physics = generate_scenario(1, 0, total_particles=10).physics
        clot = ClotCapsule(
            np.array([0.45, 0.5, 0.0]), np.array([0.55, 0.5, 0.0]), 0.02, 0
        )
        state = bare_state(tool=(0.5, 0.5, 0.3), physics=physics, clots=[clot])
        p = state.physics
        state.suction_on = True
        state.active[:10] = True
        # ten particles in the capture sphere, all on the clot capsule
        zs = np.linspace(0.26, 0.28, 10)
        for i, z in enumerate(zs):
            state.pos[i] = [0.5, 0.5, z]
        n = remove_captured(state)
        assert n == p.clot_capture_rate
        # the survivors are the ones farthest from the tip
        assert not state.active[7:10].any()
        assert state.active[:7].all()

    def test_clot_throttle_skips_free_blood(self):
        physics = generate_scenario(1, 0, total_particles=10).physics
        clot = ClotCapsule(
            np.array([0.1, 0.1, 0.0]), np.array([0.2, 0.1, 0.0]), 0.02, 0
        )
        state = bare_state(tool=(0.5, 0.5, 0.3), physics=physics, clots=[clot])
        state.suction_on = True
        state.active[:6] = True
        for i, z in enumerate(np.linspace(0.26, 0.29, 6)):
            state.pos[i] = [0.5, 0.5, z]
        # far from the clot: all six come out in one step
        assert remove_captured(state) == 6


class TestEmission:
    def test_emitter_honors_interval(self):
        src = np.array([0.5, 0.5, 0.1])
        em = BleedingEmitter(src, 0, rate=2, start_step=3, end_step=5)
        state = bare_state(capacity=64, emitters=[em])
        counts = []
        for step in range(8):
            state.step_index = step
            counts.append(emit_bleeding(state))
        assert counts == [0, 0, 0, 2, 2, 2, 0, 0]
        assert state.total_emitted == 6
        assert np.all(state.origin[:6] == 0)

    def test_capacity_truncation_records_event(self):
        em = BleedingEmitter(np.array([0.5, 0.5, 0.1]), 0, 2, 0, 100)
        state = bare_state(capacity=3, emitters=[em])
        emit_bleeding(state)  # fills 2 of 3
        emit_bleeding(state)  # fills 1, truncates
        assert state.spawned == 3
        trunc = [e for e in state.events if e["type"] == "emission_truncated"]
        assert trunc and trunc[0]["requested"] == 2 and trunc[0]["spawned"] == 1

    def test_emission_pending_tracks_window_and_capacity(self):
        em = BleedingEmitter(np.array([0.5, 0.5, 0.1]), 0, 2, 0, 10)
        state = bare_state(capacity=4, emitters=[em])
        assert state.emission_pending
        state.step_index = 11
        assert not state.emission_pending
        state.step_index = 5
        emit_bleeding(state)
        emit_bleeding(state)
        assert state.spawned == 4
        assert not state.emission_pending


class TestProjection:
    def test_particles_stay_out_of_surface(self):
        _, surface, state = make_scene(env_id=1, seed=6)
        rng = np.random.default_rng(2)
        for _ in range(60):
            step_simulation(state, rng.uniform(-0.01, 0.01, 3))
        p = state.pos[state.active]
        floor = surface_height(surface, p[:, 0], p[:, 1])
        assert np.all(p[:, 2] >= floor + state.physics.particle_radius - 1e-6)

    def test_particles_stay_out_of_clot(self):
        _, _, state = make_scene(env_id=3, seed=6, particles=400)
        for _ in range(60):
            step_simulation(state, np.zeros(3))
        clot = state.clots[0]
        p = state.pos[state.active]
        a, b = clot.p0, clot.p1
        ab = b - a
        t = np.clip(((p - a) @ ab) / float(ab @ ab), 0.0, 1.0)
        d = np.linalg.norm(p - (a + t[:, None] * ab), axis=1)
        assert np.all(d >= clot.radius + state.physics.particle_radius - 1e-6)


class TestStepContract:
    def test_tool_step_is_clamped(self):
        _, _, state = make_scene()
        start = state.tool_pos.copy()
        out = step_simulation(state, np.array([1.0, -1.0, 1.0]))
        m = state.physics.max_tool_step
        assert np.allclose(out.tool_pose - start, [m, -m, m])

    def test_nonpositive_dt_rejected(self):
        _, _, state = make_scene()
        with pytest.raises(ValueError):
            step_simulation(state, np.zeros(3), dt=0.0)
        with pytest.raises(ValueError):
            step_simulation(state, np.zeros(3), dt=-0.02)

    def test_nonfinite_positions_fault(self):
        _, _, state = make_scene()
        state.pos[np.flatnonzero(state.active)[0]] = np.nan
        with pytest.raises(SimulationFault):
            step_simulation(state, np.zeros(3))

    def test_step_index_advances(self):
        _, _, state = make_scene()
        step_simulation(state, np.zeros(3))
        step_simulation(state, np.zeros(3))
        assert state.step_index == 2
