"""Quasi-static cable world: a position-based rope on a table with two
grippers that either pinch (rigidly hold a material point) or cage (let the
cable slide tangentially through a ring).

All stepping is deterministic: identical (seed, command sequence) produces
bit-identical node positions.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .config import Config, SimConfig
from .engine import MODE_CAGE, MODE_OPEN, MODE_PINCH, step_kernel

ARM_LEFT = "left"
ARM_RIGHT = "right"
ARMS = (ARM_LEFT, ARM_RIGHT)

SCHEMA_VERSION = 1


class GripperMode(IntEnum):
    OPEN = MODE_OPEN
    PINCH = MODE_PINCH
    CAGE = MODE_CAGE


class SolverDiverged(RuntimeError):
    """A node moved implausibly far in one step; the commanded motion is bad."""


class GraspError(RuntimeError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass
class Event:
    kind: str              # RESISTANCE | CABLE_OFF_WORKSPACE | GRASP_FAILED | FAULT
    arm: str | None = None
    sim_time: float = 0.0
    value: float = 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "arm": self.arm, "t": round(self.sim_time, 4),
                "value": round(self.value, 3)}


@dataclass
class CableState:
    """View of the discretized cable path: ordered node chain plus geometry."""
    nodes: np.ndarray          # (n, 3) positions, meters
    radius: float
    rest_segment_length: float

    @property
    def node_count(self) -> int:
        return self.nodes.shape[0]

    def arclength(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.nodes, axis=0), axis=1)))

    def point_at(self, s: float) -> np.ndarray:
        """Interpolated centerline point at normalized arclength s in [0, 1]."""
        f = s * (self.node_count - 1)
        i = min(int(f), self.node_count - 2)
        t = f - i
        return (1.0 - t) * self.nodes[i] + t * self.nodes[i + 1]

    def tangent_at(self, s: float) -> np.ndarray:
        """Normalized finite-difference direction of the path at s."""
        f = s * (self.node_count - 1)
        i = min(int(f), self.node_count - 2)
        d = self.nodes[i + 1] - self.nodes[i]
        norm = np.linalg.norm(d)
        return d / norm if norm > 1e-12 else np.array([1.0, 0.0, 0.0])


@dataclass
class GripperState:
    pose: np.ndarray = field(default_factory=lambda: np.array([0.6, -0.4, 0.4, 0.0]))
    mode: GripperMode = GripperMode.OPEN
    attached_index: float | None = None
    resistance_force: float = 0.0

    def to_dict(self) -> dict:
        return {
            "pose": [float(v) for v in self.pose],
            "mode": self.mode.name,
            "attached_index": None if self.attached_index is None else float(self.attached_index),
            "resistance_force": float(self.resistance_force),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GripperState":
        g = cls()
        g.pose = np.asarray(d["pose"], dtype=float)
        g.mode = GripperMode[d["mode"]]
        g.attached_index = d.get("attached_index")
        g.resistance_force = float(d.get("resistance_force", 0.0))
        return g


class SimWorld:
    """One cable, one table, two grippers. Owns its arrays exclusively."""

    def __init__(self, config: Config, seed: int = 0, nodes: np.ndarray | None = None):
        self.config = config
        self.sim = config.sim
        self.rng_seed = seed
        n = self.sim.node_count
        if nodes is None:
            nodes = straight_layout(self.sim)
        if nodes.shape != (n, 3):
            raise ValueError(f"expected {(n, 3)} nodes, got {nodes.shape}")
        self.pos = np.array(nodes, dtype=np.float64)
        self.vel = np.zeros_like(self.pos)
        self.grippers: dict[str, GripperState] = {a: GripperState() for a in ARMS}
        self.sim_time = 0.0
        self.fault_count = 0
        # reusable kernel buffers
        self._g_mode = np.zeros(2, np.int64)
        self._g_pos = np.zeros((2, 3))
        self._g_attach = np.full(2, -1.0)
        self._g_resid = np.zeros(2)

    # -- views ---------------------------------------------------------------

    @property
    def cable(self) -> CableState:
        return CableState(self.pos, self.sim.cable_radius, self.sim.rest_segment_length)

    @property
    def node_count(self) -> int:
        return self.pos.shape[0]

    def gripper(self, arm: str) -> GripperState:
        return self.grippers[arm]

    def other_arm(self, arm: str) -> str:
        return ARM_RIGHT if arm == ARM_LEFT else ARM_LEFT

    def s_of_index(self, idx: float) -> float:
        return float(idx) / (self.node_count - 1)

    def index_of_s(self, s: float) -> float:
        return s * (self.node_count - 1)

    def clone(self) -> "SimWorld":
        w = SimWorld.__new__(SimWorld)
        w.config = self.config
        w.sim = self.sim
        w.rng_seed = self.rng_seed
        w.pos = self.pos.copy()
        w.vel = self.vel.copy()
        w.grippers = {}
        for a in ARMS:
            g = self.grippers[a]
            w.grippers[a] = GripperState(g.pose.copy(), g.mode, g.attached_index,
                                         g.resistance_force)
        w.sim_time = self.sim_time
        w.fault_count = self.fault_count
        w._g_mode = np.zeros(2, np.int64)
        w._g_pos = np.zeros((2, 3))
        w._g_attach = np.full(2, -1.0)
        w._g_resid = np.zeros(2)
        return w

    # -- stepping ------------------------------------------------------------

    def step(self, dt: float | None = None, damping: float | None = None,
             mu_cable_scale: float = 1.0, substeps: int = 1) -> None:
        cfg = self.sim
        dt = cfg.dt if dt is None else dt
        if not (0.0 < dt <= 0.01):
            raise ValueError(f"dt must be in (0, 0.01], got {dt}")
        damp = cfg.damping if damping is None else damping
        for a_i, arm in enumerate(ARMS):
            g = self.grippers[arm]
            self._g_mode[a_i] = int(g.mode)
            self._g_pos[a_i] = g.pose[:3]
            self._g_attach[a_i] = -1.0 if g.attached_index is None else g.attached_index
        sub_dt = dt / substeps
        for _ in range(substeps):
            max_disp = step_kernel(
                self.pos, self.vel, cfg.rest_segment_length, cfg.cable_radius,
                sub_dt, cfg.solver_iterations, cfg.gravity, damp,
                cfg.table_z, cfg.table_friction, cfg.cable_friction * mu_cable_scale,
                cfg.bend_stiffness, self._g_mode, self._g_pos, self._g_attach,
                cfg.cage_radius, cfg.gripper_body_radius, self._g_resid,
            )
            if max_disp > cfg.divergence_limit:
                self.fault_count += 1
                raise SolverDiverged(f"node moved {max_disp:.2f} m in one step")
        for a_i, arm in enumerate(ARMS):
            g = self.grippers[arm]
            if g.mode == GripperMode.CAGE:
                g.attached_index = float(self._g_attach[a_i])
            g.resistance_force = (float(self._g_resid[a_i]) * cfg.resistance_gain
                                  if g.mode != GripperMode.OPEN else 0.0)
        self.sim_time += dt

    def settle(self, max_steps: int | None = None, tol: float | None = None) -> int:
        """Step with heavy damping until the cable stops moving. Returns steps."""
        cfg = self.sim
        max_steps = cfg.settle_max_steps if max_steps is None else max_steps
        tol = cfg.settle_tol if tol is None else tol
        quiet = 0
        steps = 0
        prev = self.pos.copy()
        for _ in range(max_steps):
            self.step(damping=cfg.settle_damping)
            steps += 1
            disp = float(np.max(np.abs(self.pos - prev)))
            prev[:] = self.pos
            quiet = quiet + 1 if disp < tol else 0
            if quiet >= 3:
                break
        self.vel[:] = 0.0
        return steps

    def is_settled(self, tol: float = 0.05) -> bool:
        return float(np.max(np.abs(self.vel))) < tol

    def off_workspace_nodes(self) -> int:
        xmin, ymin, xmax, ymax = self.sim.workspace_bounds
        m = self.sim.off_workspace_margin
        x, y = self.pos[:, 0], self.pos[:, 1]
        out = (x < xmin - m) | (x > xmax + m) | (y < ymin - m) | (y > ymax + m)
        return int(np.count_nonzero(out))

    # -- snapshots -----------------------------------------------------------

    def to_snapshot(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": int(self.rng_seed),
            "radius": float(self.sim.cable_radius),
            "rest_segment_length": float(self.sim.rest_segment_length),
            "nodes": [[float(v) for v in p] for p in self.pos],
            "grippers": {a: self.grippers[a].to_dict() for a in ARMS},
            "sim_time": float(self.sim_time),
        }

    @classmethod
    def from_snapshot(cls, data: dict, config: Config | None = None) -> "SimWorld":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported scene schema_version {data.get('schema_version')!r}")
        config = config or Config()
        nodes = np.asarray(data["nodes"], dtype=float)
        config.sim.node_count = nodes.shape[0]
        config.sim.cable_radius = float(data["radius"])
        config.sim.cable_length = float(data["rest_segment_length"]) * (nodes.shape[0] - 1)
        w = cls(config, seed=int(data["seed"]), nodes=nodes)
        for a in ARMS:
            if a in data.get("grippers", {}):
                w.grippers[a] = GripperState.from_dict(data["grippers"][a])
        w.sim_time = float(data.get("sim_time", 0.0))
        return w

    def save_scene(self, path: str | Path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_snapshot(), f)

    @classmethod
    def load_scene(cls, path: str | Path, config: Config | None = None) -> "SimWorld":
        with open(path) as f:
            return cls.from_snapshot(json.load(f), config)


def straight_layout(sim: SimConfig) -> np.ndarray:
    """Cable resting straight along the x axis through the workspace center."""
    n = sim.node_count
    nodes = np.zeros((n, 3))
    nodes[:, 0] = np.linspace(-sim.cable_length / 2, sim.cable_length / 2, n)
    nodes[:, 2] = sim.table_z + sim.cable_radius
    return nodes


# -- spec operations ----------------------------------------------------------

def step(world: SimWorld, dt: float) -> SimWorld:
    world.step(dt)
    return world


def approach_clear(world: SimWorld, point: np.ndarray, exclude_lo: int,
                   exclude_hi: int, clearance: float | None = None) -> bool:
    """True when no other cable segment crowds the vertical approach line
    above `point`. Nodes in [exclude_lo, exclude_hi] belong to the grasp
    target and are ignored."""
    cfg = world.sim
    clearance = cfg.grasp_clearance if clearance is None else clearance
    top = np.array([point[0], point[1], point[2] + 0.15])
    pos = world.pos
    n = world.node_count
    for i in range(n - 1):
        if exclude_lo - 1 <= i <= exclude_hi:
            continue
        d = _seg_seg_distance(pos[i], pos[i + 1], point, top)
        if d < clearance:
            return False
    return True


def _seg_seg_distance(a0, a1, b0, b1) -> float:
    d1 = a1 - a0
    d2 = b1 - b0
    r = a0 - b0
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    EPS = 1e-18
    if a <= EPS and e <= EPS:
        return float(np.linalg.norm(r))
    if a <= EPS:
        t = min(max(f / e, 0.0), 1.0)
        s = 0.0
    else:
        c = float(d1 @ r)
        if e <= EPS:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom > EPS else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    return float(np.linalg.norm(a0 + s * d1 - (b0 + t * d2)))


def grasp(world: SimWorld, arm: str, s: float, mode: GripperMode,
          check_separation: bool = True) -> SimWorld:
    """Move the arm above the cable point at arclength s, descend and engage.

    Raises GraspError(UNREACHABLE) outside the inflated workspace and
    GraspError(COLLISION) when the approach line is crowded or the other
    gripper is too close.
    """
    if mode not in (GripperMode.PINCH, GripperMode.CAGE):
        raise ValueError("grasp mode must be PINCH or CAGE")
    cfg = world.sim
    point = world.cable.point_at(s)
    xmin, ymin, xmax, ymax = cfg.workspace_bounds
    m = cfg.reach_margin
    if not (xmin - m <= point[0] <= xmax + m and ymin - m <= point[1] <= ymax + m):
        raise GraspError("UNREACHABLE", f"target {point[:2]} outside inflated bounds")
    other = world.grippers[world.other_arm(arm)]
    if check_separation and other.mode != GripperMode.OPEN:
        if np.linalg.norm(other.pose[:3] - point) < cfg.gripper_separation:
            raise GraspError("COLLISION", "other gripper too close to target")
    idx = world.index_of_s(s)
    i0 = int(idx)
    if not approach_clear(world, point, i0 - 3, i0 + 4):
        raise GraspError("COLLISION", "cable segment crowds the approach line")

    g = world.grippers[arm]
    # travel: current pose -> above target -> target, physics keeps running
    above = np.array([point[0], point[1], point[2] + 0.15])
    path = float(np.linalg.norm(above - g.pose[:3]) + np.linalg.norm(point - above))
    steps = max(1, int(path / cfg.gripper_speed / cfg.dt))
    for _ in range(steps):
        world.step()
    g.pose = np.array([point[0], point[1], point[2], g.pose[3]])
    g.mode = mode
    g.attached_index = float(idx)
    g.resistance_force = 0.0
    return world


def engage(world: SimWorld, arm: str, s: float, mode: GripperMode) -> None:
    """Attach instantly without planner checks (coordinated bimanual moves)."""
    point = world.cable.point_at(s)
    g = world.grippers[arm]
    g.pose = np.array([point[0], point[1], point[2], g.pose[3]])
    g.mode = mode
    g.attached_index = float(world.index_of_s(s))
    g.resistance_force = 0.0


def release(world: SimWorld, arm: str, settle: bool = True) -> SimWorld:
    g = world.grippers[arm]
    if g.mode == GripperMode.OPEN:
        return world
    g.mode = GripperMode.OPEN
    g.attached_index = None
    g.resistance_force = 0.0
    if settle:
        world.settle()
    return world


def follow(world: SimWorld, targets, duration: float, force_cap: float | None = None,
           damping: float | None = None, mu_cable_scale: float = 1.0,
           substeps: int = 1, stop_on_resistance: bool = True) -> tuple[list[Event], bool]:
    """Drive gripper poses along time-parameterized targets while stepping.

    targets: dict arm -> callable(tau) -> pose (4,) for tau in [0, duration].
    Emits RESISTANCE (halting the trajectory when stop_on_resistance) and
    CABLE_OFF_WORKSPACE events. Returns (events, halted_early).
    """
    cfg = world.sim
    cap = cfg.force_cap if force_cap is None else force_cap
    events: list[Event] = []
    off_reported = False
    halted = False
    steps = max(1, int(round(duration / cfg.dt)))
    for k in range(steps):
        tau = (k + 1) * cfg.dt
        for arm, fn in targets.items():
            g = world.grippers[arm]
            g.pose = np.asarray(fn(min(tau, duration)), dtype=float)
        world.step(damping=damping, mu_cable_scale=mu_cable_scale, substeps=substeps)
        for arm in targets:
            g = world.grippers[arm]
            if g.mode != GripperMode.OPEN and g.resistance_force > cap:
                events.append(Event("RESISTANCE", arm, world.sim_time, g.resistance_force))
                halted = True
        if not off_reported and world.off_workspace_nodes() > 0:
            events.append(Event("CABLE_OFF_WORKSPACE", None, world.sim_time,
                                world.off_workspace_nodes()))
            off_reported = True
        if halted and stop_on_resistance:
            break
    return events, halted


def linear_path(start: np.ndarray, waypoints: list, speed: float):
    """(fn, duration) moving through waypoints at constant speed.
    Waypoints are (x, y, z) or (x, y, z, yaw)."""
    pts = [np.asarray(start[:3], dtype=float)]
    yaws = [float(start[3]) if len(start) > 3 else 0.0]
    for wp in waypoints:
        wp = np.asarray(wp, dtype=float)
        pts.append(wp[:3])
        yaws.append(float(wp[3]) if wp.shape[0] > 3 else yaws[-1])
    lengths = [float(np.linalg.norm(pts[i + 1] - pts[i])) for i in range(len(pts) - 1)]
    total = sum(lengths)
    duration = max(total / speed, 1e-6)

    def fn(tau: float) -> np.ndarray:
        dist = min(tau / duration, 1.0) * total
        acc = 0.0
        for i, L in enumerate(lengths):
            if dist <= acc + L or i == len(lengths) - 1:
                t = 0.0 if L < 1e-12 else (dist - acc) / L
                p = (1 - t) * pts[i] + t * pts[i + 1]
                yaw = (1 - t) * yaws[i] + t * yaws[i + 1]
                return np.array([p[0], p[1], p[2], yaw])
            acc += L
        return np.array([*pts[-1], yaws[-1]])

    return fn, duration


def move_gripper(world: SimWorld, arm: str, waypoints: list,
                 force_cap: float | None = None) -> tuple[SimWorld, list[Event]]:
    """Follow waypoints at the configured speed; halts on RESISTANCE."""
    g = world.grippers[arm]
    if g.mode == GripperMode.OPEN:
        raise ValueError("move_gripper requires an engaged gripper (PINCH or CAGE)")
    fn, duration = linear_path(g.pose, waypoints, world.sim.gripper_speed)
    events, _ = follow(world, {arm: fn}, duration, force_cap=force_cap)
    return world, events
