"""Task environments evaluated at the policy rate.

``WipeEnv`` removes markers when the tool passes over them with a normal
force inside ``[force_min, force_penalty_threshold]``.  ``PressEnv`` asks the
tool to reach a target above the surface and then hold a contact force for a
while.  Both penalize normal force above the penalty threshold.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .plant import Plant, PlantState
from .spatial import Pose, Wrench

# Keys allowed in a serialized observation; controller internals never appear here.
OBSERVATION_KEYS = ("ee_pose", "wrench", "centroid", "extras")


@dataclass(frozen=True)
class Observation:
    ee_pose: Pose
    wrench: Wrench
    centroid: np.ndarray
    extras: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        row = {}
        for i, name in enumerate(("px", "py", "pz", "qw", "qx", "qy", "qz")):
            row[f"obs_{name}"] = float(self.ee_pose.to_vector()[i])
        for i, name in enumerate(("fx", "fy", "fz", "tx", "ty", "tz")):
            row[f"obs_{name}"] = float(self.wrench.to_vector()[i])
        row["obs_cx"], row["obs_cy"] = (float(c) for c in self.centroid)
        for k, v in sorted(self.extras.items()):
            row[f"obs_{k}"] = float(v)
        return row


@dataclass(frozen=True)
class StepOutcome:
    reward: float
    penalty: float
    markers_removed_this_step: int
    done: bool
    success: bool = False
    info: dict = field(default_factory=dict)


def series_arrays(series: list[PlantState]) -> tuple[np.ndarray, np.ndarray]:
    """Tool positions (N x 3) and normal forces (N,) of a list of states."""
    pos = np.array([s.x.position for s in series]).reshape(-1, 3)
    fn = np.array([s.f_ext.force[2] for s in series], dtype=float)
    return pos, fn


def _penalty(fn: np.ndarray, dt: float, threshold: float, penalty_scale: float) -> float:
    over = np.maximum(0.0, fn - threshold)
    return -penalty_scale * float(over.sum()) * dt


@dataclass
class WipeTask:
    n_markers: int = 10
    marker_region: tuple[float, float, float, float] = (-0.03, 0.03, -0.03, 0.03)
    wipe_radius: float = 0.04
    force_min: float = 15.0
    force_penalty_threshold: float = 60.0
    penalty_scale: float = 1.0
    contact_bonus: float = 0.1
    episode_length: int = 200
    home: tuple[float, ...] = (0.0, 0.0, 0.05, 0.0, 0.0, 0.0)
    joint_noise: float = 0.0
    stop_when_clear: bool = True

    def __post_init__(self):
        if not self.force_min < self.force_penalty_threshold:
            raise ValueError("force_min must be below force_penalty_threshold")
        x0, x1, y0, y1 = self.marker_region
        if not (x0 <= x1 and y0 <= y1):
            raise ValueError("marker_region must be (x_min, x_max, y_min, y_max)")


class WipeEnv:
    def __init__(self, task: WipeTask, plant: Plant, dt: float):
        self.task = task
        self.plant = plant
        self.dt = dt
        self.markers = np.zeros((0, 2))
        self.steps = 0

    def centroid(self) -> np.ndarray:
        if len(self.markers) == 0:
            return np.zeros(2)
        return self.markers.mean(axis=0)

    def observe(self, state: PlantState) -> Observation:
        return Observation(state.x, state.f_ext, self.centroid(), {"markers_left": len(self.markers)})

    def reset(self, rng: np.random.Generator) -> tuple[PlantState, Observation]:
        t = self.task
        x0, x1, y0, y1 = t.marker_region
        self.markers = np.column_stack([rng.uniform(x0, x1, t.n_markers), rng.uniform(y0, y1, t.n_markers)])
        self.steps = 0
        q = np.asarray(t.home, dtype=float)
        if t.joint_noise > 0:
            q = q + rng.normal(0.0, t.joint_noise, q.shape)
        state = self.plant.state_from_joints(q)
        return state, self.observe(state)

    def step(self, positions: np.ndarray, fn: np.ndarray, final: PlantState,
             action=None) -> tuple[Observation, StepOutcome]:
        """Score one policy period from per-tick tool positions and normal forces."""
        t = self.task
        penalty = _penalty(fn, self.dt, t.force_penalty_threshold, t.penalty_scale)
        valid = (fn >= t.force_min) & (fn <= t.force_penalty_threshold)
        removed = 0
        for p, ok in zip(positions, valid):
            if not ok or len(self.markers) == 0:
                continue
            d = np.linalg.norm(self.markers - p[:2], axis=1)
            keep = d > t.wipe_radius
            removed += int((~keep).sum())
            self.markers = self.markers[keep]
        self.steps += 1
        frac = float(valid.mean()) if len(fn) else 0.0
        reward = removed + t.contact_bonus * frac + penalty
        cleared = len(self.markers) == 0
        done = (cleared and t.stop_when_clear) or self.steps >= t.episode_length
        info = {"fn_max": float(fn.max()) if len(fn) else 0.0, "fn_mean": float(fn.mean()) if len(fn) else 0.0,
                "valid_fraction": frac}
        return self.observe(final), StepOutcome(reward, penalty, removed, done, cleared, info)


@dataclass
class PressTask:
    target_region: tuple[float, float, float, float] = (-0.05, 0.05, -0.05, 0.05)
    target_tolerance: float = 0.02
    force_hold: float = 5.0
    hold_time: float = 1.0
    force_penalty_threshold: float = 60.0
    penalty_scale: float = 1.0
    distance_scale: float = 1.0
    success_bonus: float = 10.0
    episode_length: int = 60
    home: tuple[float, ...] = (0.0, 0.0, 0.05, 0.0, 0.0, 0.0)
    joint_noise: float = 0.0

    def __post_init__(self):
        if not self.force_hold < self.force_penalty_threshold:
            raise ValueError("force_hold must be below force_penalty_threshold")


class PressEnv:
    """Reach a target on the surface, then hold at least ``force_hold`` N there."""

    def __init__(self, task: PressTask, plant: Plant, dt: float):
        self.task = task
        self.plant = plant
        self.dt = dt
        self.target = np.zeros(2)
        self.held = 0.0
        self.steps = 0

    def observe(self, state: PlantState) -> Observation:
        return Observation(state.x, state.f_ext, self.target.copy(), {"held": self.held})

    def reset(self, rng: np.random.Generator) -> tuple[PlantState, Observation]:
        t = self.task
        x0, x1, y0, y1 = t.target_region
        self.target = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
        self.held = 0.0
        self.steps = 0
        q = np.asarray(t.home, dtype=float)
        if t.joint_noise > 0:
            q = q + rng.normal(0.0, t.joint_noise, q.shape)
        state = self.plant.state_from_joints(q)
        return state, self.observe(state)

    def step(self, positions: np.ndarray, fn: np.ndarray, final: PlantState,
             action=None) -> tuple[Observation, StepOutcome]:
        t = self.task
        penalty = _penalty(fn, self.dt, t.force_penalty_threshold, t.penalty_scale)
        good_ticks = 0
        for p, f in zip(positions, fn):
            near = np.linalg.norm(p[:2] - self.target) <= t.target_tolerance
            if near and t.force_hold <= f <= t.force_penalty_threshold:
                self.held += self.dt
                good_ticks += 1
            else:
                self.held = 0.0
        self.steps += 1
        success = self.held >= t.hold_time - 1e-9
        dist = float(np.linalg.norm(final.x.position[:2] - self.target))
        reward = -t.distance_scale * dist + good_ticks / max(1, len(fn)) + penalty
        if success:
            reward += t.success_bonus
        done = success or self.steps >= t.episode_length
        info = {"fn_max": float(fn.max()) if len(fn) else 0.0, "fn_mean": float(fn.mean()) if len(fn) else 0.0,
                "distance": dist}
        return self.observe(final), StepOutcome(reward, penalty, 0, done, success, info)


def make_env(task, plant: Plant, dt: float):
    if isinstance(task, WipeTask):
        return WipeEnv(task, plant, dt)
    if isinstance(task, PressTask):
        return PressEnv(task, plant, dt)
    raise TypeError(f"unknown task {task!r}")


def home_pose(plant: Plant, home) -> Pose:
    return plant.model.forward_kinematics(np.asarray(home, dtype=float))
