"""Slow-loop policies: scripted wiping expert, uniform random actions, and a
cross-entropy-method learner over waypoint parameterizations."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Callable

import numpy as np

from .control import Action
from .env import Observation
from .spatial import Pose, Wrench

POLICY_DT = 0.05


class Phase(IntEnum):
    APPROACH = 0
    PRESS = 1
    WIPE = 2
    DONE = 3


@dataclass(frozen=True)
class ExpertConfig:
    surface_height: float = 0.0
    hover_height: float = 0.02
    approach_speed: float = 0.1
    press_force: float = 10.0
    press_ramp_time: float = 0.5
    press_depth: float = 0.01
    press_tolerance: float = 1.0
    press_timeout: float = 2.0
    contact_force: float = 1.0
    radius: float = 0.04
    revolutions_per_second: float = 0.5
    rotations: float = 8.0
    workspace: tuple[float, float, float, float, float, float] = (-0.3, 0.3, -0.3, 0.3, -0.05, 0.3)


@dataclass(frozen=True)
class WipeExpertState:
    phase: Phase = Phase.APPROACH
    rotation_count: float = 0.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(2))
    radius: float = 0.04
    angular_rate: float = 2 * np.pi * 0.5 * POLICY_DT
    target: np.ndarray | None = None
    press_elapsed: float = 0.0
    force: float = 0.0


def _clip_box(p: np.ndarray, box) -> np.ndarray:
    lo = np.array(box[0::2])
    hi = np.array(box[1::2])
    return np.clip(p, lo, hi)


def expert_step(state: WipeExpertState, obs: Observation, cfg: ExpertConfig = ExpertConfig(),
                orientation: np.ndarray | None = None) -> tuple[Action, WipeExpertState]:
    """Approach the wipe spot, press, wipe ``cfg.rotations`` circles, hold."""
    quat = obs.ee_pose.orientation if orientation is None else orientation
    pos = obs.ee_pose.position
    fn = float(obs.wrench.force[2])
    target = pos.copy() if state.target is None else state.target.copy()
    force = state.force
    phase = state.phase
    step_len = cfg.approach_speed * POLICY_DT

    if phase is Phase.APPROACH:
        if fn > cfg.contact_force:
            phase = Phase.PRESS
            target = np.array([target[0], target[1], pos[2]])
            state = replace(state, press_elapsed=0.0)
        else:
            goal_xy = np.asarray(obs.centroid, dtype=float)
            dxy = goal_xy - target[:2]
            dist = np.linalg.norm(dxy)
            if dist > 1e-3:
                target[:2] += dxy if dist <= step_len else dxy / dist * step_len
                target[2] = max(target[2], cfg.surface_height + cfg.hover_height)
            else:
                target[:2] = goal_xy
                target[2] -= step_len
    if phase is Phase.PRESS:
        elapsed = state.press_elapsed + POLICY_DT
        force = cfg.press_force * min(1.0, elapsed / cfg.press_ramp_time)
        state = replace(state, press_elapsed=elapsed)
        ramped = elapsed >= cfg.press_ramp_time
        # the force is "applied" once it reaches the commanded value within tolerance
        if ramped and (fn >= cfg.press_force - cfg.press_tolerance or elapsed >= cfg.press_timeout):
            phase = Phase.WIPE
            center = target[:2] - np.array([cfg.radius, 0.0])
            state = replace(state, center=center, radius=cfg.radius,
                            angular_rate=2 * np.pi * cfg.revolutions_per_second * POLICY_DT, rotation_count=0.0)
    elif phase is Phase.WIPE:
        count = min(cfg.rotations, state.rotation_count + state.angular_rate / (2 * np.pi))
        angle = 2 * np.pi * count
        target[:2] = state.center + state.radius * np.array([np.cos(angle), np.sin(angle)])
        target[2] = cfg.surface_height - cfg.press_depth
        force = cfg.press_force
        state = replace(state, rotation_count=count)
        if count >= cfg.rotations - 1e-9:
            phase = Phase.DONE
    elif phase is Phase.DONE:
        force = cfg.press_force

    target = _clip_box(target, cfg.workspace)
    force = min(force, cfg.press_force)
    action = Action(Pose(target, quat), Wrench(np.array([0.0, 0.0, force])))
    return action, replace(state, phase=phase, target=target, force=force)


class ExpertPolicy:
    def __init__(self, cfg: ExpertConfig = ExpertConfig()):
        self.cfg = cfg
        self.state = WipeExpertState()
        self.orientation = None

    def reset(self, obs: Observation, rng: np.random.Generator | None = None):
        self.state = WipeExpertState(radius=self.cfg.radius)
        self.orientation = obs.ee_pose.orientation.copy()

    def act(self, obs: Observation) -> Action:
        action, self.state = expert_step(self.state, obs, self.cfg, self.orientation)
        return action

    @property
    def finished(self) -> bool:
        return self.state.phase is Phase.DONE


@dataclass(frozen=True)
class ActionBounds:
    """Per-step bounds for random actions.

    ``delta`` bounds the position offset from the current pose; ``stiffness``
    (translational axes) and ``force_z`` are only sampled when the space has
    that channel.
    """

    delta: tuple[float, float, float] = (0.02, 0.02, 0.02)
    stiffness: tuple[float, float] | None = None
    force_z: tuple[float, float] | None = None
    workspace: tuple[float, float, float, float, float, float] = (-0.15, 0.15, -0.15, 0.15, -0.05, 0.15)


def random_policy_step(rng: np.random.Generator, bounds: ActionBounds, base: Pose,
                       expand_k: Callable[[np.ndarray], np.ndarray] | None = None) -> Action:
    d = np.asarray(bounds.delta, dtype=float)
    pos = _clip_box(base.position + rng.uniform(-d, d), bounds.workspace)
    K_d = None
    if bounds.stiffness is not None:
        lo, hi = bounds.stiffness
        k = rng.uniform(lo, hi, 3)
        K_d = k if expand_k is None else expand_k(k)
    F = np.zeros(3)
    if bounds.force_z is not None:
        F[2] = rng.uniform(*bounds.force_z)
    return Action(Pose(pos, base.orientation), Wrench(F), K_d)


class RandomPolicy:
    def __init__(self, bounds: ActionBounds, expand_k=None):
        self.bounds = bounds
        self.expand_k = expand_k
        self.rng = None

    def reset(self, obs: Observation, rng: np.random.Generator):
        self.rng = rng
        self.orientation = obs.ee_pose.orientation.copy()

    def act(self, obs: Observation) -> Action:
        base = Pose(obs.ee_pose.position, self.orientation)
        return random_policy_step(self.rng, self.bounds, base, self.expand_k)


@dataclass(frozen=True)
class WaypointLayout:
    """Maps a parameter vector in ``[-1, 1]^d`` to a waypoint schedule.

    Each waypoint has an xy offset from the observed centroid and a height
    offset from the surface, plus translational stiffness (variable spaces)
    and a normal force (force spaces).
    """

    n_waypoints: int = 4
    steps_per_waypoint: int = 10
    xy_range: float = 0.05
    z_range: tuple[float, float] = (-0.03, 0.03)
    surface_height: float = 0.0
    stiffness: tuple[float, float] | None = None
    force_z: tuple[float, float] | None = None

    @property
    def per_waypoint(self) -> int:
        return 3 + (3 if self.stiffness else 0) + (1 if self.force_z else 0)

    @property
    def dim(self) -> int:
        return self.n_waypoints * self.per_waypoint


class WaypointPolicy:
    def __init__(self, layout: WaypointLayout, params: np.ndarray, expand_k=None):
        self.layout = layout
        self.params = np.clip(np.asarray(params, dtype=float).reshape(layout.n_waypoints, layout.per_waypoint), -1, 1)
        self.expand_k = expand_k
        self.t = 0

    def reset(self, obs: Observation, rng=None):
        self.t = 0
        self.orientation = obs.ee_pose.orientation.copy()

    def act(self, obs: Observation) -> Action:
        L = self.layout
        w = min(self.t // L.steps_per_waypoint, L.n_waypoints - 1)
        self.t += 1
        p = self.params[w]
        lo, hi = L.z_range
        pos = np.array([
            obs.centroid[0] + L.xy_range * p[0],
            obs.centroid[1] + L.xy_range * p[1],
            L.surface_height + lo + (hi - lo) * 0.5 * (p[2] + 1),
        ])
        i = 3
        K_d = None
        if L.stiffness:
            klo, khi = L.stiffness
            k = klo + (khi - klo) * 0.5 * (p[i:i + 3] + 1)
            i += 3
            K_d = k if self.expand_k is None else self.expand_k(k)
        F = np.zeros(3)
        if L.force_z:
            flo, fhi = L.force_z
            F[2] = flo + (fhi - flo) * 0.5 * (p[i] + 1)
        return Action(Pose(pos, self.orientation), Wrench(F), K_d)


@dataclass(frozen=True)
class CemConfig:
    population: int = 10
    elite_fraction: float = 0.2
    generations: int = 10
    init_sigma: float = 0.5
    min_sigma: float = 0.02

    def __post_init__(self):
        if self.population < 1 or self.generations < 0:
            raise ValueError("population must be >= 1 and generations >= 0")
        if not 0 < self.elite_fraction < 1:
            raise ValueError("elite_fraction must be in (0, 1)")
        if self.n_elite < 1:
            raise ValueError("elite count must be >= 1")
        if not self.init_sigma > 0:
            raise ValueError("init_sigma must be > 0")

    @property
    def n_elite(self) -> int:
        return int(round(self.population * self.elite_fraction))


@dataclass
class CemResult:
    best_params: np.ndarray
    best_return: float
    curve: list[dict]
    evaluations: int
    env_steps: int
    first_success_step: int | None
    episodes: list = field(default_factory=list)


def cem_optimize(evaluate: Callable[[np.ndarray, int], tuple[float, int, bool, object]], dim: int,
                 cfg: CemConfig, seed: int, init_mean: np.ndarray | None = None) -> CemResult:
    """Elitist cross-entropy method.

    ``evaluate(params, eval_seed)`` returns ``(return, env_steps, success,
    payload)``.  Each generation samples ``population`` fresh candidates;
    elites are chosen among them and the previous elites, so the elite mean
    return never decreases.  Evaluation seeds depend only on ``(seed,
    generation, index)``.
    """
    ss = np.random.SeedSequence(seed)
    sample_rng = np.random.Generator(np.random.Philox(ss.spawn(1)[0]))
    mean = np.zeros(dim) if init_mean is None else np.asarray(init_mean, dtype=float).copy()
    sigma = np.full(dim, cfg.init_sigma)
    elites: list[tuple[float, np.ndarray]] = []
    curve = []
    env_steps = 0
    evaluations = 0
    first_success = None
    payloads = []
    for gen in range(cfg.generations):
        cands = mean + sigma * sample_rng.standard_normal((cfg.population, dim))
        cands = np.clip(cands, -1.0, 1.0)
        scored = []
        for i, c in enumerate(cands):
            eval_seed = int(np.random.SeedSequence([seed, gen, i]).generate_state(1)[0])
            ret, steps, success, payload = evaluate(c, eval_seed)
            evaluations += 1
            env_steps += steps
            if success and first_success is None:
                first_success = env_steps
            payloads.append(payload)
            scored.append((float(ret), c))
        returns = np.array([r for r, _ in scored])
        pool = sorted(elites + scored, key=lambda rc: -rc[0])
        elites = pool[: cfg.n_elite]
        E = np.array([c for _, c in elites])
        mean = E.mean(axis=0)
        sigma = np.maximum(E.std(axis=0), cfg.min_sigma)
        curve.append({
            "generation": gen,
            "mean_return": float(returns.mean()),
            "max_return": float(returns.max()),
            "elite_return": float(np.mean([r for r, _ in elites])),
            "env_steps": env_steps,
        })
    best_params = elites[0][1] if elites else mean
    best_return = elites[0][0] if elites else float("nan")
    return CemResult(best_params, best_return, curve, evaluations, env_steps, first_success, payloads)
