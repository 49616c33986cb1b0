"""Physics and perception constants with serialization helpers.

All lengths are meters, times are seconds. The defaults are tuned so that
four settled pools of ~1000 particles each stay static without suction and
clear in a few hundred 0.02 s steps under the scripted controller.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class PhysicsConfig:
    dt: float = 0.02
    gravity: float = 9.81

    # particle packing
    particle_radius: float = 0.002
    rest_distance: float = 0.004
    neighbor_radius: float = 0.006
    relaxation_iterations: int = 2
    push_stiffness: float = 0.5
    cohesion_stiffness: float = 0.02
    max_correction: float = 0.002
    damping: float = 0.99
    contact_damping: float = 0.2
    max_speed: float = 0.25
    # particles higher than this above the local surface count as airborne;
    # airborne particles outside the suction cone have their lateral speed
    # clamped so ejecta lands next to the pool instead of scattering
    airborne_clearance: float = 0.01
    stray_lateral_speed: float = 0.05

    # suction field
    suction_strength: float = 30.0      # peak acceleration at the tip
    suction_range: float = 0.35
    cone_half_angle_deg: float = 30.0
    capture_radius: float = 0.05
    capture_height_offset: float = 0.01
    # particles this close to the cone axis are swallowed directly, so a
    # tool parked over a bleeding source keeps the site clear
    capture_core_radius: float = 0.025
    # coagulated blood is viscous: particles within this 2D distance of a
    # clot capsule are extracted at most `clot_capture_rate` per step
    clot_influence_radius: float = 0.06
    clot_capture_rate: int = 3

    # tool kinematics
    max_tool_step: float = 0.01
    hover_height: float = 0.20
    engage_radius: float = 0.06

    settle_steps: int = 200
    penetration_tolerance: float = 1e-4

    @property
    def cone_cos(self) -> float:
        return math.cos(math.radians(self.cone_half_angle_deg))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PhysicsConfig":
        return cls(**d)


@dataclass(frozen=True)
class PerceptionConfig:
    mask_rows: int = 84
    mask_cols: int = 84
    min_pool_cells: int = 5
    flag_dilation_cells: int = 2
    tool_adjacency_cells: int = 3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PerceptionConfig":
        return cls(**d)


#: workspace rectangle ((xmin, xmax), (ymin, ymax))
DEFAULT_EXTENT: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 1.0), (0.0, 1.0))

DEFAULT_SURFACE_DEGREE = 4
DEFAULT_SURFACE_AMPLITUDE = 0.03
