"""Configuration for the simulator, perception stack, topology oracles and harness.

Every physical constant lives here so a single JSON file can override the lot
(`Config.from_json`). Defaults reproduce the reference setup: a 2.7 m cable on
a 1.4 x 0.9 m table viewed by an overhead orthographic camera at 1142 x 732 px.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class SimConfig:
    cable_length: float = 2.7
    cable_radius: float = 0.0025
    node_count: int = 270
    dt: float = 0.005
    solver_iterations: int = 20
    gravity: float = 9.81
    damping: float = 0.99            # per-step velocity retention (quasi-static)
    shake_damping: float = 0.998     # retention during dynamic shaking
    settle_damping: float = 0.94
    bend_stiffness: float = 0.12     # 0..1, resistance to kinks (config knob)
    table_z: float = 0.0
    table_friction: float = 0.3
    cable_friction: float = 0.2
    workspace_x: float = 1.4
    workspace_y: float = 0.9
    off_workspace_margin: float = 0.05
    gripper_speed: float = 0.25
    force_cap: float = 30.0
    resistance_gain: float = 15000.0  # N per meter of unresolved constraint residual
    cage_radius: float = 0.012
    gripper_body_radius: float = 0.015
    pinch_tolerance: float = 0.002
    reach_margin: float = 0.2        # workspace inflation for reachability
    grasp_clearance: float = 0.015   # min distance of other segments to approach line
    gripper_separation: float = 0.06
    settle_tol: float = 2.0e-5       # max node displacement per step counting as rest
    settle_max_steps: int = 1500
    divergence_limit: float = 0.5    # m per step; beyond this the solver has blown up

    @property
    def rest_segment_length(self) -> float:
        return self.cable_length / (self.node_count - 1)

    @property
    def workspace_bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the table workspace, centered on origin."""
        hx, hy = self.workspace_x / 2.0, self.workspace_y / 2.0
        return (-hx, -hy, hx, hy)


@dataclass
class RenderConfig:
    image_width: int = 1142
    image_height: int = 732
    camera_z: float = 2.0


@dataclass
class PerceptionConfig:
    frontier_px: int = 12             # BFS frontier bbox side triggering a crossing
    backtrack_px: float = 100.0       # walk-back along the traced path
    endpoint_cube: float = 0.1        # endpoint proximity cube side around gripper
    endpoint_suppression_len: float = 0.4  # ignore endpoints while more cable remains
    crop_ahead: float = 0.03          # stop-condition crop: extent in front of gripper
    crop_width: float = 0.13
    crop_depth: float = 0.06          # extent beneath the gripper
    slice_thickness: float = 0.01
    knot_points_multi: int = 1000     # points needed alongside a multi-component slice
    knot_points_dense: int = 2000     # points that alone imply a knot
    merge_radius_px: int = 2
    endpoint_depth_tol: float = 0.003 # on top of the cable radius
    visibility_threshold: float = 0.6 # fraction of knot arc pixels that must be visible
    pull_point_min_arc: float = 0.04  # arclength separation of the two pull points
    pull_point_min_space: float = 0.06


@dataclass
class TopologyConfig:
    grid: int = 54
    r3_state_cap: int = 10000
    pull_speed: float = 1.0           # oracle pulls are not robot motions
    straightness_exit: float = 0.92   # chord/arclength ratio for early unknot exit
    perturb_retries: int = 8
    perturb_step_deg: float = 0.1


@dataclass
class PolicyConfig:
    max_actions: int = 30
    trace_segment: float = 0.1
    trace_height: float = 0.45
    reidemeister_separation: float = 1.2
    shake_height: float = 0.7
    shake_oscillations: int = 3
    shake_amplitude_rad: float = 2.0
    shake_frequency_hz: float = 1.5
    shake_radius: float = 0.1
    separation_distance: float = 1.0
    wiggle_count: int = 15
    wiggle_amplitude_rad: float = 0.2
    isolation_clearance: float = 0.15
    max_recovery_faults: int = 5


@dataclass
class HarnessConfig:
    tier_time_budget: dict = field(default_factory=lambda: {0: 900.0, 1: 900.0, 2: 1200.0})
    loose_diameter: tuple = (0.12, 0.14)
    dense_diameter: tuple = (0.06, 0.08)
    side_offset: float = 0.25
    mid_offset: float = 0.75
    center_offset: float = 1.5
    near_gap: tuple = (0.40, 0.70)    # arclength meters between knot centers, tier 2
    far_gap: tuple = (1.55, 2.00)
    drop_height: float = 1.5
    generation_retries: int = 20
    false_knot_streak: int = 3        # consecutive phantom KNOT verdicts => failure C


@dataclass
class Config:
    sim: SimConfig = field(default_factory=SimConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    perception: PerceptionConfig = field(default_factory=PerceptionConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        cfg = cls()
        for section, values in data.items():
            if not hasattr(cfg, section):
                raise ValueError(f"unknown config section {section!r}")
            target = getattr(cfg, section)
            for key, value in values.items():
                if not hasattr(target, key):
                    raise ValueError(f"unknown config key {section}.{key}")
                current = getattr(target, key)
                if isinstance(current, tuple) and isinstance(value, list):
                    value = tuple(value)
                if key == "tier_time_budget" and isinstance(value, dict):
                    value = {int(k): float(v) for k, v in value.items()}
                setattr(target, key, value)
        return cfg

    @classmethod
    def from_json(cls, path: str | Path) -> "Config":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save_json(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


DEFAULT_CONFIG = Config()
