"""Shared fixtures: small seeded scenes and cached episode runs."""

from __future__ import annotations

import numpy as np
import pytest

from suctionsim import ScriptedPolicy, generate_scenario, run_episode
from suctionsim.perception import BinaryMask, PoolObservation


@pytest.fixture(scope="session")
def scenario_factory():
    def make(env_id=1, seed=11, particles=700, **kw):
        return generate_scenario(env_id, seed, total_particles=particles, **kw)

    return make


@pytest.fixture(scope="session")
def episode_env1_rule(scenario_factory):
    scenario = scenario_factory(1, 11)
    return scenario, run_episode(scenario, "rule", ScriptedPolicy(scenario.physics))


@pytest.fixture(scope="session")
def episode_env2_rule(scenario_factory):
    scenario = scenario_factory(2, 12, particles=900)
    return scenario, run_episode(scenario, "rule", ScriptedPolicy(scenario.physics))


def make_pool(label, area=10, bleeding=False, clot=False, tool_adjacent=False,
              grid_shape=(84, 84), bbox=(0, 0, 1, 1), centroid=(0.5, 0.5)):
    grid = np.zeros(grid_shape, dtype=bool)
    grid[bbox[0]: bbox[2] + 1, bbox[1]: bbox[3] + 1] = True
    return PoolObservation(
        label=label,
        grid=grid,
        area=area,
        centroid=centroid,
        bbox=bbox,
        bleeding=bleeding,
        clot=clot,
        tool_adjacent=tool_adjacent,
    )


def mask_from_rows(rows, extent=((0.0, 1.0), (0.0, 1.0))):
    grid = np.array([[c == "1" for c in row] for row in rows], dtype=bool)
    return BinaryMask(grid, extent)
