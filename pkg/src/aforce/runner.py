"""Episode execution and metrics.

One episode is a simulated-time loop: at every policy tick the policy sees
an observation and emits an action, the bridge starts a new reference
segment, and the controller and plant then run ``ticks_per_action`` control
ticks.  Everything random flows from one root seed per (config, seed) cell.
"""
from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bridge import ReferenceTrack, sample, set_target
from .config import ExperimentConfig, dump_config
from .control import (ActionContractError, ActionSpace, GainState, SpaceKind, TaskError, action_space_step,
                      initial_controller_state)
from .env import make_env
from .plant import FloatingBody, NumericalBlowup, PlantState
from .policy import ExpertPolicy, RandomPolicy, WaypointPolicy, cem_optimize
from .spatial import POSE_COLUMNS, Pose, Twist, Wrench, pose_error, quat_to_rotvec, tracking_error_metric

log = logging.getLogger(__name__)


@dataclass
class EpisodeRecord:
    space: str
    task: str
    seed: int
    dt: float
    ticks_per_action: int
    # per control tick
    tau: np.ndarray
    q_dot: np.ndarray
    e: np.ndarray
    x_dot: np.ndarray
    K: np.ndarray
    F_ff: np.ndarray
    wrench: np.ndarray
    setpoint: np.ndarray
    # per policy tick
    actions: np.ndarray
    observations: list
    rewards: np.ndarray
    penalties: np.ndarray
    pose: np.ndarray = None
    # totals
    energy: float = 0.0
    tracking_error: float = 0.0
    penalty_sum: float = 0.0
    markers_removed: int = 0
    action_count: int = 0
    total_reward: float = 0.0
    success: bool = False
    failure: str | None = None
    env_steps: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def n_ticks(self) -> int:
        return len(self.tau)


def energy_total(record: EpisodeRecord) -> float:
    """Integral of absolute joint power, ``sum |tau_j q_dot_j| dt``."""
    if record.n_ticks == 0:
        return 0.0
    return float(np.abs(record.tau * record.q_dot).sum() * record.dt)


def energy_per_action(record: EpisodeRecord) -> float:
    return energy_total(record) / record.action_count if record.action_count else 0.0


def tracking_error_total(record: EpisodeRecord) -> float:
    if record.n_ticks == 0:
        return 0.0
    return float(sum(tracking_error_metric(e) for e in record.e) * record.dt)


def safety_stats(records: list[EpisodeRecord]) -> tuple[float, float]:
    """Fraction of episodes with any penalty, and the mean penalty sum."""
    if not records:
        raise ValueError("safety_stats needs at least one episode")
    pens = np.array([r.penalty_sum for r in records])
    return float(np.mean(pens < 0)), float(pens.mean())


def _rngs(seed: int):
    reset_ss, noise_ss, policy_ss = np.random.SeedSequence(seed).spawn(3)
    mk = lambda ss: np.random.Generator(np.random.Philox(ss))
    return mk(reset_ss), mk(noise_ss), mk(policy_ss)


def expand_stiffness(cfg: ExperimentConfig, space: ActionSpace):
    """Maps a translational (x, y, z) stiffness triple onto the task axes,
    keeping the space's default rotational stiffness."""
    if cfg.plant.model == "floating":
        return lambda k: np.concatenate([k, space.stiffness[3:]])
    return lambda k: np.array([k[0], k[2], space.stiffness[2]])


def build_policy(cfg: ExperimentConfig, space: ActionSpace, params=None):
    kind = cfg.policy.kind
    if params is not None or kind == "cem":
        layout = cfg.build_layout(space)
        params = np.zeros(layout.dim) if params is None else params
        return WaypointPolicy(layout, params, expand_stiffness(cfg, space))
    if kind == "expert":
        return ExpertPolicy(cfg.build_expert())
    if kind == "random":
        return RandomPolicy(cfg.build_bounds(space), expand_stiffness(cfg, space))
    return HoldPolicy()


class HoldPolicy:
    def reset(self, obs, rng=None):
        self.pose = obs.ee_pose

    def act(self, obs):
        from .control import Action
        return Action(self.pose)


class _ReferenceSim:
    """Control/plant loop built from the public API; works for any plant."""

    def __init__(self, plant, space, pid, cfg: ExperimentConfig, state, logs):
        self.plant = plant
        self.space = space
        self.c = cfg.controller
        self.state = state
        self.cstate = initial_controller_state(space, pid)
        self.logs = logs
        self.tick = 0
        self.energy = 0.0
        self.tracking = 0.0

    def run(self, track, action, n_ticks, dt, qd_noise, w_noise):
        plant, c, S = self.plant, self.c, self.plant.S
        tau_log, qd_log, e_log, xd_log, K_log, F_log, w_log, sp_log, pose_log = self.logs
        for i in range(n_ticks):
            x_ref, xd_ref, track = sample(track, dt)
            meas = plant.measure(self.state, None if qd_noise is None else qd_noise[i],
                                 None if w_noise is None else w_noise[i])
            terms = plant.dynamics_terms(meas.q, meas.q_dot)
            e6 = pose_error(meas.x, x_ref)
            edot6 = meas.x_dot.to_vector() - xd_ref.to_vector()
            err = TaskError(S @ e6, S @ edot6)
            tau, self.cstate, _ = action_space_step(
                self.space, action, meas, self.cstate, dt, terms, x_ref, xd_ref, c.gravity_compensation,
                c.epsilon_velocity_sign, c.contact_threshold, err=err)
            self.state = state = plant.step(self.state, tau, dt, terms if meas is self.state else None)
            t = self.tick
            tau_log[t] = tau
            qd_log[t] = state.q_dot
            e_log[t] = e6
            xd_log[t] = state.x_dot.to_vector()
            K_log[t] = self.cstate.gains.K
            F_log[t] = self.cstate.gains.F_ff
            w_log[t] = state.f_ext.to_vector()
            sp_log[t] = x_ref.to_vector()
            pose_log[t] = state.x.to_vector()
            self.energy += float(np.abs(tau * state.q_dot).sum()) * dt
            self.tracking += tracking_error_metric(e6) * dt
            self.tick += 1
        return track


class _FastSim:
    """Array-state twin of ``_ReferenceSim`` for the floating body, run by the
    compiled kernel in ``fastloop``."""

    def __init__(self, plant, space, pid, cfg: ExperimentConfig, state, logs):
        from . import fastloop
        self.kernel = fastloop
        model = plant.model
        surf = plant.surface
        c = cfg.controller
        self.pos = state.x.position.copy()
        self.quat = state.x.orientation.copy()
        self.qd = state.q_dot.copy()
        self.f_ext = state.f_ext.to_vector().copy()
        self.body = np.array([model.mass, model.inertia, model.dynamics_terms(state.q, state.q_dot).g[2],
                              plant.joint_damping])
        self.surf = np.zeros(5) if surf is None else np.array([1.0, surf.height, surf.k_n, surf.c_n, surf.mu_t])
        self.kind = {SpaceKind.FIXED: fastloop.KIND_FIXED, SpaceKind.VARIABLE: fastloop.KIND_VARIABLE,
                     SpaceKind.AFORCE: fastloop.KIND_AFORCE}[space.kind]
        self.force = bool(space.force)
        self.grav = bool(c.gravity_compensation)
        self.eps_sign = float(c.epsilon_velocity_sign)
        self.threshold = float(c.contact_threshold)
        psi = space.psi
        if psi is None:
            self.psi = np.ones((7, 6))
            delta = 1.0
        else:
            self.psi = np.array([psi.alpha, psi.beta, psi.gamma, psi.mu, psi.k_min, psi.k_max, psi.f_ff_max])
            delta = psi.delta
        self.stiffness = np.asarray(space.stiffness, dtype=float).copy()
        lo, hi = space.k_bounds if space.k_bounds is not None else (self.stiffness, self.stiffness)
        self.k_lo = np.asarray(lo, dtype=float).copy()
        self.k_hi = np.asarray(hi, dtype=float).copy()
        g0 = GainState.from_stiffness(space.stiffness)
        self.K, self.D, self.F_ff = g0.K.copy(), g0.D.copy(), g0.F_ff.copy()
        self.pid_gains = np.array([pid.kp, pid.ki, pid.kd])
        self.pid_state = np.zeros((3, 6))
        self.pid_scalars = np.array([pid.output_cap, pid.integral_limit, 0.0, delta])
        self.xref = np.empty(7)
        self.logs = logs
        self.tick = 0
        self.energy = 0.0
        self.tracking = 0.0
        self.model = model
        self.plant = plant

    @property
    def state(self) -> PlantState:
        q = np.concatenate([self.pos, quat_to_rotvec(self.quat)])
        return PlantState(q, self.qd.copy(), Pose(self.pos.copy(), self.quat.copy()),
                          Twist(self.qd[:3].copy(), self.qd[3:].copy()), Wrench.from_vector(self.f_ext))

    def run(self, track, action, n_ticks, dt, qd_noise, w_noise):
        zeros = np.zeros((n_ticks, 6))
        start = np.concatenate([track.start.position, track.start.orientation])
        target = np.concatenate([track.target.position, track.target.orientation])
        times = np.array([track.duration, track.elapsed])
        K_d = np.zeros(6) if action.K_d is None else np.asarray(action.K_d, dtype=float)
        done, status, de, dtr = self.kernel.run_period(
            n_ticks, dt, self.pos, self.quat, self.qd, self.f_ext, self.body, self.surf,
            self.kind, self.force, self.grav, self.eps_sign, self.threshold,
            self.psi, self.stiffness, self.k_lo, self.k_hi, self.K, self.D, self.F_ff,
            self.pid_gains, self.pid_state, self.pid_scalars, start, target, times, self.xref,
            action.F_d.to_vector(), K_d, action.K_d is not None,
            zeros if qd_noise is None else np.ascontiguousarray(qd_noise),
            zeros if w_noise is None else np.ascontiguousarray(w_noise),
            self.logs, self.tick)
        self.tick += done
        self.energy += de
        self.tracking += dtr
        if done or status != self.kernel.OK:
            # only the setpoint and the elapsed time feed the next segment
            track = replace(track, x_ref=Pose(self.xref[:3].copy(), self.xref[3:].copy()), elapsed=float(times[1]))
        if status != self.kernel.OK:
            reason = {self.kernel.BLOWUP_VELOCITY: "joint velocity diverged",
                      self.kernel.BLOWUP_POSITION: "joint position diverged",
                      self.kernel.BAD_TORQUE: "non-finite joint torque command"}[status]
            raise NumericalBlowup(reason)
        return track


def _use_fast_path(plant, fast: bool | None) -> bool:
    if fast is None:
        fast = True
    return fast and isinstance(plant.model, FloatingBody)


def run_episode(cfg: ExperimentConfig, seed: int, space_name: str | None = None, policy=None,
                episode_length: int | None = None, fast: bool | None = None) -> EpisodeRecord:
    """Simulate one episode.  ``fast=False`` forces the pure-Python loop."""
    space_name = space_name or cfg.runner.space
    space = cfg.build_space(space_name)
    plant = cfg.build_plant()
    task = cfg.build_task()
    dt = cfg.dt
    N = cfg.ticks_per_action
    env = make_env(task, plant, dt)
    reset_rng, noise_rng, policy_rng = _rngs(seed)
    noisy = plant.noise.active
    if policy is None:
        policy = build_policy(cfg, space)
    state, obs = env.reset(reset_rng)
    policy.reset(obs, policy_rng)
    track = ReferenceTrack.hold(state.x, cfg.bridge.max_linear, cfg.bridge.max_angular)
    n, m = plant.n, plant.m
    T_actions = task.episode_length if episode_length is None else episode_length
    T = T_actions * N
    logs = (np.zeros((T, n)), np.zeros((T, n)), np.zeros((T, 6)), np.zeros((T, 6)), np.zeros((T, m)),
            np.zeros((T, m)), np.zeros((T, 6)), np.zeros((T, 7)), np.zeros((T, 7)))
    sim_cls = _FastSim if _use_fast_path(plant, fast) else _ReferenceSim
    sim = sim_cls(plant, space, cfg.build_pid(), cfg, state, logs)
    act_log = np.full((T_actions, 13 + m), np.nan)
    rewards = np.zeros(T_actions)
    penalties = np.zeros(T_actions)
    observations = []
    failure = None
    success = False
    markers = 0
    action_count = 0
    for k in range(T_actions):
        action = policy.act(obs)
        if action.K_d is not None and not space.has_stiffness_channel:
            raise ActionContractError(f"space {space.name!r} has no stiffness channel")
        observations.append(obs.to_row())
        act_log[k, :7] = action.x_d.to_vector()
        act_log[k, 7:13] = action.F_d.to_vector()
        if action.K_d is not None:
            act_log[k, 13:] = action.K_d
        track = set_target(track, action.x_d)
        qd_noise, w_noise = plant.draw_noise(noise_rng if noisy else None, N)
        first = sim.tick
        action_count = k + 1
        try:
            track = sim.run(track, action, N, dt, qd_noise, w_noise)
        except NumericalBlowup as exc:
            failure = f"NumericalBlowup: {exc}"
            log.warning("episode %s/%s seed %d failed: %s", space_name, cfg.task.kind, seed, exc)
            break
        obs, outcome = env.step(logs[8][first:sim.tick, :3], logs[6][first:sim.tick, 2], sim.state, action)
        rewards[k] = outcome.reward
        penalties[k] = outcome.penalty
        markers += outcome.markers_removed_this_step
        success = success or outcome.success
        if outcome.done or getattr(policy, "finished", False):
            break
    tick = sim.tick
    cut = [a[:tick] for a in logs]
    rec = EpisodeRecord(
        space_name, cfg.task.kind, seed, dt, N, *cut[:8], act_log[:action_count],
        observations[:action_count], rewards[:action_count], penalties[:action_count], pose=cut[8],
    )
    rec.energy = sim.energy
    rec.tracking_error = sim.tracking
    rec.penalty_sum = float(rec.penalties.sum())
    rec.markers_removed = markers
    rec.action_count = action_count
    rec.failure = failure
    rec.success = success and failure is None
    # failed episodes keep their penalties but score no task reward
    rec.total_reward = rec.penalty_sum if failure else float(rec.rewards.sum())
    rec.env_steps = action_count
    if hasattr(env, "markers"):
        rec.extras["markers_left"] = int(len(env.markers))
    return rec


def summarize(rec: EpisodeRecord) -> dict:
    return {
        "space": rec.space,
        "task": rec.task,
        "seed": rec.seed,
        "energy_J": rec.energy,
        "energy_per_action_J": energy_per_action(rec),
        "tracking_error": rec.tracking_error,
        "penalty_sum": rec.penalty_sum,
        "penalized": rec.penalty_sum < 0,
        "markers_removed": rec.markers_removed,
        "markers_left": rec.extras.get("markers_left"),
        "action_count": rec.action_count,
        "total_reward": rec.total_reward,
        "success": rec.success,
        "failure": rec.failure,
    }


def _columns(prefix: str, names, unit: str) -> list[str]:
    return [f"{prefix}{nm} [{unit}]" for nm in names]


def write_episode_csv(rec: EpisodeRecord, path, decimation: int = 10) -> None:
    n = rec.tau.shape[1] if rec.n_ticks else 0
    m = rec.K.shape[1] if rec.n_ticks else 0
    axes6 = ("x", "y", "z", "rx", "ry", "rz")
    header = ["tick", "t [s]"]
    header += _columns("tau_", range(n), "N|N*m")
    header += _columns("qdot_", range(n), "m/s|rad/s")
    header += _columns("e_", axes6, "m|rad")
    header += _columns("xdot_", axes6, "m/s|rad/s")
    header += _columns("K_", range(m), "N/m|N*m/rad")
    header += _columns("Fff_", range(m), "N|N*m")
    header += _columns("w_", ("fx", "fy", "fz", "tx", "ty", "tz"), "N|N*m")
    header += _columns("sp_", POSE_COLUMNS, "m|1")
    header += _columns("x_", POSE_COLUMNS, "m|1")
    act_cols = _columns("a_", POSE_COLUMNS, "m|1") + _columns("a_F", ("x", "y", "z", "tx", "ty", "tz"), "N|N*m") \
        + _columns("a_K", range(m), "N/m|N*m/rad")
    obs_keys = sorted(rec.observations[0].keys()) if rec.observations else []
    header += act_cols + [f"{k} [-]" for k in obs_keys] + ["reward [-]", "penalty [-]"]
    N = rec.ticks_per_action
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(rec.n_ticks):
            policy_tick = i % N == 0
            if not policy_tick and i % decimation:
                continue
            row = [i, f"{i * rec.dt:.6f}"]
            for arr in (rec.tau, rec.q_dot, rec.e, rec.x_dot, rec.K, rec.F_ff, rec.wrench, rec.setpoint, rec.pose):
                row += [repr(float(v)) for v in arr[i]]
            if policy_tick and i // N < rec.action_count:
                a = i // N
                row += ["" if np.isnan(v) else repr(float(v)) for v in rec.actions[a]]
                row += [repr(rec.observations[a][k]) for k in obs_keys]
                row += [repr(float(rec.rewards[a])), repr(float(rec.penalties[a]))]
            else:
                row += [""] * (len(act_cols) + len(obs_keys) + 2)
            w.writerow(row)


def _run_cell(args):
    cfg, seed, space = args
    return run_episode(cfg, seed, space)


def run_cells(cfg: ExperimentConfig, cells: list[tuple[str, int]], workers: int | None = None) -> list[EpisodeRecord]:
    """Run (space, seed) cells; results come back in the order given."""
    workers = workers or cfg.runner.workers
    jobs = [(cfg, seed, space) for space, seed in cells]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_cell(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell, jobs))


def write_outputs(cfg: ExperimentConfig, records: list[EpisodeRecord], out_dir, extra_files=()) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if cfg.runner.write_episode_csv:
        dec = 1 if cfg.runner.full_rate_logs else cfg.runner.decimation
        for rec in records:
            name = f"episode_{rec.space}_{rec.task}_seed{rec.seed}.csv"
            write_episode_csv(rec, out / name, dec)
            files.append(name)
    summary = {f"{r.space}/{r.task}/{r.seed}": summarize(r) for r in records}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    files.append("summary.json")
    dump_config(cfg, out / "config.yaml")
    files.append("config.yaml")
    files.extend(extra_files)
    manifest = {"files": sorted(files), "config_sha256": cfg.digest(), "version": __version__}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return summary


def cem_train(cfg: ExperimentConfig, space_name: str, seed: int):
    """Cross-entropy search over waypoint parameters for one action space.

    Every evaluated episode's summary is kept in ``result.episodes`` so that
    safety statistics can be computed over the whole sweep.
    """
    space = cfg.build_space(space_name)
    layout = cfg.build_layout(space)
    expand = expand_stiffness(cfg, space)

    def evaluate(params, eval_seed):
        rec = run_episode(cfg, eval_seed, space_name, policy=WaypointPolicy(layout, params, expand))
        return rec.total_reward, rec.env_steps, rec.success, summarize(rec)

    return cem_optimize(evaluate, layout.dim, cfg.build_cem(), seed)
