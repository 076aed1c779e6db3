"""Experiment configuration: YAML file <-> typed sections, with validation.

Every section is a dataclass; unknown keys are rejected and all problems are
reported together with their ``section.key`` path.  ``dump_config`` writes
the effective configuration so a run can be reproduced from its output
directory.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .control import ActionSpace, AdaptiveParams, PidState, SpaceKind
from .env import PressTask, WipeTask
from .plant import FloatingBody, Plant, PlanarArm, SensorNoise, SurfaceModel
from .policy import ActionBounds, CemConfig, ExpertConfig, WaypointLayout

STABILITY_BOUND = 0.1
# explicit damping step D*dt/m must stay below this for a non-oscillating update
DAMPING_STEP_BOUND = 1.0


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass
class PlantSection:
    model: str = "floating"
    mass: float = 1.0
    inertia: float = 0.1
    gravity: bool = False
    lengths: list = field(default_factory=lambda: [0.4, 0.3, 0.2])
    masses: list = field(default_factory=lambda: [2.0, 1.5, 1.0])
    link_inertias: list | None = None
    home: list | None = None
    joint_damping: float = 0.01
    q_dot_noise: float = 0.0
    wrench_noise: float = 0.0


@dataclass
class SurfaceSection:
    enabled: bool = True
    height: float = 0.0
    k_n: float = 1e4
    c_n: float = 50.0
    mu_t: float = 10.0


@dataclass
class AforceSection:
    alpha: Any = 100.0
    beta: Any = 5000.0
    gamma: Any = 100.0
    mu: Any = 2.0
    delta: float = 0.016
    k_min: Any = 10.0
    k_max: Any = 2000.0
    f_ff_max: Any = 30.0
    k_init: Any = 1000.0


@dataclass
class PidSection:
    kp: Any = field(default_factory=lambda: [0.0, 0.0, 0.5, 0.0, 0.0, 0.0])
    ki: Any = 0.0
    kd: Any = 0.0
    integral_limit: float = 20.0
    output_cap: float = 50.0


@dataclass
class SpaceSection:
    kind: str = "fixed"
    stiffness: Any = 500.0
    force: bool = False
    k_min: Any = None
    k_max: Any = None


def _default_spaces() -> dict:
    return {
        "low": {"kind": "fixed", "stiffness": 100.0, "force": True},
        "mid": {"kind": "fixed", "stiffness": 1000.0, "force": True},
        "high": {"kind": "fixed", "stiffness": 2000.0, "force": True},
        "variable": {"kind": "variable", "stiffness": 1000.0, "force": False, "k_min": 10.0, "k_max": 2000.0},
        "variable+force": {"kind": "variable", "stiffness": 1000.0, "force": True, "k_min": 10.0, "k_max": 2000.0},
        "low+force": {"kind": "fixed", "stiffness": 100.0, "force": True},
        "aforce": {"kind": "aforce", "force": False},
        "aforce+force": {"kind": "aforce", "force": True},
    }


@dataclass
class ControllerSection:
    gravity_compensation: bool = True
    epsilon_velocity_sign: float = -1.0
    contact_threshold: float = 1.0
    aforce: AforceSection = field(default_factory=AforceSection)
    pid: PidSection = field(default_factory=PidSection)
    spaces: dict = field(default_factory=_default_spaces)


@dataclass
class BridgeSection:
    control_rate: float = 1000.0
    policy_rate: float = 20.0
    max_linear: float = 1.0
    max_angular: float = 2.0


@dataclass
class TaskSection:
    kind: str = "wipe"
    wipe: dict = field(default_factory=dict)
    press: dict = field(default_factory=dict)


@dataclass
class CemSection:
    population: int = 10
    elite_fraction: float = 0.2
    generations: int = 10
    init_sigma: float = 0.5
    min_sigma: float = 0.02
    n_waypoints: int = 4
    steps_per_waypoint: int = 10
    xy_range: float = 0.05
    z_range: list = field(default_factory=lambda: [-0.03, 0.03])
    stiffness: list | None = None
    force_z: list | None = None


@dataclass
class RandomSection:
    delta: list = field(default_factory=lambda: [0.02, 0.02, 0.02])
    stiffness: list | None = None
    force_z: list | None = None
    workspace: list = field(default_factory=lambda: [-0.15, 0.15, -0.15, 0.15, -0.05, 0.15])


@dataclass
class PolicySection:
    kind: str = "expert"
    expert: dict = field(default_factory=dict)
    random: RandomSection = field(default_factory=RandomSection)
    cem: CemSection = field(default_factory=CemSection)


@dataclass
class RunnerSection:
    seeds: list = field(default_factory=lambda: [0])
    space: str = "aforce"
    compare: list = field(default_factory=list)
    output_dir: str = "out"
    full_rate_logs: bool = False
    decimation: int = 10
    workers: int = 1
    write_episode_csv: bool = True


@dataclass
class ExperimentConfig:
    plant: PlantSection = field(default_factory=PlantSection)
    surface: SurfaceSection = field(default_factory=SurfaceSection)
    controller: ControllerSection = field(default_factory=ControllerSection)
    bridge: BridgeSection = field(default_factory=BridgeSection)
    task: TaskSection = field(default_factory=TaskSection)
    policy: PolicySection = field(default_factory=PolicySection)
    runner: RunnerSection = field(default_factory=RunnerSection)

    # ---- derived objects -------------------------------------------------

    @property
    def dt(self) -> float:
        return 1.0 / self.bridge.control_rate

    @property
    def ticks_per_action(self) -> int:
        return int(round(self.bridge.control_rate / self.bridge.policy_rate))

    def build_model(self):
        p = self.plant
        if p.model == "floating":
            return FloatingBody(p.mass, p.inertia, p.gravity)
        return PlanarArm(p.lengths, p.masses, p.link_inertias, gravity=p.gravity)

    def build_surface(self) -> SurfaceModel | None:
        s = self.surface
        return SurfaceModel(s.height, s.k_n, s.c_n, s.mu_t) if s.enabled else None

    def build_plant(self) -> Plant:
        return Plant(self.build_model(), self.build_surface(), self.plant.joint_damping,
                     SensorNoise(self.plant.q_dot_noise, self.plant.wrench_noise))

    @property
    def task_dim(self) -> int:
        return 6 if self.plant.model == "floating" else 3

    def home(self) -> list:
        if self.plant.home is not None:
            return list(self.plant.home)
        if self.plant.model == "floating":
            return [0.0, 0.0, 0.05, 0.0, 0.0, 0.0]
        return [0.3, 1.2, 1.4]

    def build_psi(self) -> AdaptiveParams:
        a = self.controller.aforce
        return AdaptiveParams.create(self.task_dim, a.alpha, a.beta, a.gamma, a.mu, a.delta, a.k_min, a.k_max, a.f_ff_max)

    def build_pid(self) -> PidState:
        p = self.controller.pid
        return PidState(np.asarray(p.kp, dtype=float), np.asarray(p.ki, dtype=float), np.asarray(p.kd, dtype=float),
                        output_cap=p.output_cap, integral_limit=p.integral_limit)

    def build_space(self, name: str) -> ActionSpace:
        m = self.task_dim
        entry = self.controller.spaces[name]
        kind = SpaceKind(entry.kind)
        if kind is SpaceKind.AFORCE:
            psi = self.build_psi()
            K0 = _as_vec(self.controller.aforce.k_init, m)
            return ActionSpace(name, kind, np.clip(K0, psi.k_min, psi.k_max), entry.force, psi=psi)
        K = _as_vec(entry.stiffness, m)
        bounds = None
        if kind is SpaceKind.VARIABLE:
            bounds = (_as_vec(entry.k_min, m), _as_vec(entry.k_max, m))
        return ActionSpace(name, kind, K, entry.force, k_bounds=bounds)

    def build_task(self):
        home = tuple(self.home())
        if self.task.kind == "wipe":
            kw = dict(self.task.wipe)
            kw.setdefault("home", home)
            return WipeTask(**_tuplify(kw))
        kw = dict(self.task.press)
        kw.setdefault("home", home)
        return PressTask(**_tuplify(kw))

    def build_expert(self) -> ExpertConfig:
        kw = dict(self.policy.expert)
        kw.setdefault("surface_height", self.surface.height)
        return ExpertConfig(**_tuplify(kw))

    def build_bounds(self, space: ActionSpace) -> ActionBounds:
        r = self.policy.random
        return ActionBounds(
            tuple(r.delta),
            tuple(r.stiffness) if (r.stiffness and space.has_stiffness_channel) else None,
            tuple(r.force_z) if (r.force_z and space.force) else None,
            tuple(r.workspace),
        )

    def build_layout(self, space: ActionSpace) -> WaypointLayout:
        c = self.policy.cem
        return WaypointLayout(
            c.n_waypoints, c.steps_per_waypoint, c.xy_range, tuple(c.z_range), self.surface.height,
            tuple(c.stiffness) if (c.stiffness and space.has_stiffness_channel) else None,
            tuple(c.force_z) if (c.force_z and space.force) else None,
        )

    def build_cem(self) -> CemConfig:
        c = self.policy.cem
        return CemConfig(c.population, c.elite_fraction, c.generations, c.init_sigma, c.min_sigma)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["controller"]["spaces"] = {k: dataclasses.asdict(v) for k, v in self.controller.spaces.items()}
        return _plain(d)

    def digest(self) -> str:
        text = yaml.safe_dump(self.to_dict(), sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def _tuplify(kw: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in kw.items()}


def _as_vec(v, m: int) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return np.full(m, float(a))
    if a.shape != (m,):
        raise ValueError(f"expected scalar or {m}-vector, got {list(a)}")
    return a


_SECTIONS = {
    "plant": PlantSection,
    "surface": SurfaceSection,
    "controller": ControllerSection,
    "bridge": BridgeSection,
    "task": TaskSection,
    "policy": PolicySection,
    "runner": RunnerSection,
}
_NESTED = {
    ("controller", "aforce"): AforceSection,
    ("controller", "pid"): PidSection,
    ("policy", "random"): RandomSection,
    ("policy", "cem"): CemSection,
}


def _build_section(cls, data, path: str, errors: list[str], nested_key=None):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        errors.append(f"{path}: expected a mapping")
        return cls()
    names = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            errors.append(f"{path}.{k}: unknown key")
    kwargs = {}
    for k, v in data.items():
        if k not in names:
            continue
        sub = _NESTED.get((nested_key, k))
        if sub is not None:
            kwargs[k] = _build_section(sub, v, f"{path}.{k}", errors)
        else:
            kwargs[k] = v
    try:
        obj = cls(**kwargs)
    except TypeError as exc:
        errors.append(f"{path}: {exc}")
        return cls()
    return obj


def config_from_dict(raw: dict) -> ExperimentConfig:
    errors: list[str] = []
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: expected a mapping"])
    for k in raw:
        if k not in _SECTIONS:
            errors.append(f"{k}: unknown section")
    sections = {name: _build_section(cls, raw.get(name), name, errors, nested_key=name) for name, cls in _SECTIONS.items()}
    cfg = ExperimentConfig(**sections)
    # merge named spaces over the defaults
    spaces = _default_spaces()
    user_spaces = (raw.get("controller") or {}).get("spaces") or {}
    if not isinstance(user_spaces, dict):
        errors.append("controller.spaces: expected a mapping")
        user_spaces = {}
    for name, entry in user_spaces.items():
        base = dict(spaces.get(name, {}))
        if isinstance(entry, dict):
            base.update(entry)
        spaces[name] = base
    built = {}
    for name, entry in spaces.items():
        built[name] = _build_section(SpaceSection, entry, f"controller.spaces.{name}", errors)
    cfg.controller.spaces = built
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def _check_vec(v, m, path, errors, positive=False, nonneg=False):
    try:
        a = _as_vec(v, m)
    except (ValueError, TypeError) as exc:
        errors.append(f"{path}: {exc}")
        return None
    if not np.all(np.isfinite(a)):
        errors.append(f"{path}: must be finite")
    elif positive and np.any(a <= 0):
        errors.append(f"{path}: must be > 0")
    elif nonneg and np.any(a < 0):
        errors.append(f"{path}: must be >= 0")
    return a


def validate(cfg: ExperimentConfig) -> list[str]:
    e: list[str] = []
    p = cfg.plant
    if p.model not in ("floating", "planar"):
        e.append(f"plant.model: must be 'floating' or 'planar', got {p.model!r}")
        return e
    m = cfg.task_dim
    if p.model == "floating":
        if not p.mass > 0:
            e.append("plant.mass: must be > 0")
        if not p.inertia > 0:
            e.append("plant.inertia: must be > 0")
    else:
        if len(p.lengths) != len(p.masses) or len(p.lengths) < 2:
            e.append("plant.lengths/plant.masses: need equal lengths >= 2")
        if any(v <= 0 for v in list(p.lengths) + list(p.masses)):
            e.append("plant.lengths/plant.masses: must be > 0")
        if p.link_inertias is not None and (len(p.link_inertias) != len(p.lengths) or any(v <= 0 for v in p.link_inertias)):
            e.append("plant.link_inertias: need one positive value per link")
    if p.joint_damping < 0:
        e.append("plant.joint_damping: must be >= 0")
    if p.q_dot_noise < 0 or p.wrench_noise < 0:
        e.append("plant.q_dot_noise/wrench_noise: must be >= 0")
    if p.home is not None:
        n = 6 if p.model == "floating" else len(p.lengths)
        if len(p.home) != n:
            e.append(f"plant.home: expected {n} joint values")

    b = cfg.bridge
    if not b.control_rate > 0 or not b.policy_rate > 0:
        e.append("bridge.control_rate/policy_rate: must be > 0")
        return e
    dt = 1.0 / b.control_rate
    if not 0 < dt <= 0.01:
        e.append("bridge.control_rate: control period must be in (0, 0.01] s")
    ratio = b.control_rate / b.policy_rate
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        e.append("bridge: control_rate must be an integer multiple of policy_rate")
    if abs(b.policy_rate - 20.0) > 1e-9:
        e.append("bridge.policy_rate: the policy runs at 20 Hz")
    if not b.max_linear > 0 or not b.max_angular > 0:
        e.append("bridge.max_linear/max_angular: must be > 0")

    s = cfg.surface
    if s.enabled:
        if not s.k_n > 0:
            e.append("surface.k_n: must be > 0")
        if s.c_n < 0:
            e.append("surface.c_n: must be >= 0")
        if s.mu_t < 0:
            e.append("surface.mu_t: must be >= 0")
        if p.model in ("floating", "planar") and not e:
            m_min = cfg.build_model().min_task_mass
            bound = s.k_n * dt * dt / m_min
            if bound >= STABILITY_BOUND:
                e.append(f"surface.k_n: k_n*dt^2/m = {bound:.3g} violates the stability bound {STABILITY_BOUND}")

    c = cfg.controller
    if c.epsilon_velocity_sign not in (-1, 1, -1.0, 1.0):
        e.append("controller.epsilon_velocity_sign: must be -1 or +1")
    a = c.aforce
    for name in ("alpha", "beta", "gamma", "mu"):
        _check_vec(getattr(a, name), m, f"controller.aforce.{name}", e, nonneg=True)
    if not (isinstance(a.delta, (int, float)) and a.delta > 0):
        e.append("controller.aforce.delta: must be > 0")
    kmin = _check_vec(a.k_min, m, "controller.aforce.k_min", e, positive=True)
    kmax = _check_vec(a.k_max, m, "controller.aforce.k_max", e, positive=True)
    if kmin is not None and kmax is not None and np.any(kmin > kmax):
        e.append("controller.aforce: k_min must be <= k_max")
    _check_vec(a.f_ff_max, m, "controller.aforce.f_ff_max", e, positive=True)
    _check_vec(a.k_init, m, "controller.aforce.k_init", e, positive=True)
    pid = c.pid
    for name in ("kp", "ki", "kd"):
        _check_vec(getattr(pid, name), 6, f"controller.pid.{name}", e, nonneg=True)
    if not pid.output_cap > 0 or pid.output_cap > 50.0:
        e.append("controller.pid.output_cap: must be in (0, 50] N")
    if not pid.integral_limit >= 0:
        e.append("controller.pid.integral_limit: must be >= 0")
    for name, sp in c.spaces.items():
        path = f"controller.spaces.{name}"
        if sp.kind not in ("fixed", "variable", "aforce"):
            e.append(f"{path}.kind: must be fixed, variable or aforce")
            continue
        if sp.kind != "aforce":
            _check_vec(sp.stiffness, m, f"{path}.stiffness", e, positive=True)
        if sp.kind == "variable":
            lo = _check_vec(sp.k_min, m, f"{path}.k_min", e, positive=True)
            hi = _check_vec(sp.k_max, m, f"{path}.k_max", e, positive=True)
            if lo is not None and hi is not None and np.any(lo > hi):
                e.append(f"{path}: k_min must be <= k_max")
    if not e:
        e.extend(_damping_step_errors(cfg, dt))

    t = cfg.task
    if t.kind not in ("wipe", "press"):
        e.append(f"task.kind: must be 'wipe' or 'press', got {t.kind!r}")
    else:
        cls = WipeTask if t.kind == "wipe" else PressTask
        names = {f.name for f in dataclasses.fields(cls)}
        for k in getattr(t, t.kind):
            if k not in names:
                e.append(f"task.{t.kind}.{k}: unknown key")
        if not any(x.startswith("task.") for x in e):
            try:
                cfg.build_task()
            except (ValueError, TypeError) as exc:
                e.append(f"task.{t.kind}: {exc}")

    pol = cfg.policy
    if pol.kind not in ("expert", "random", "cem", "hold"):
        e.append(f"policy.kind: must be expert, random, cem or hold, got {pol.kind!r}")
    names = {f.name for f in dataclasses.fields(ExpertConfig)}
    for k in pol.expert:
        if k not in names:
            e.append(f"policy.expert.{k}: unknown key")
    if not any(x.startswith("policy.expert") for x in e):
        try:
            ex = cfg.build_expert()
            if ex.press_force > 10.0 + 1e-12:
                e.append("policy.expert.press_force: the expert never commands more than 10 N")
        except (ValueError, TypeError) as exc:
            e.append(f"policy.expert: {exc}")
    try:
        cfg.build_cem()
    except (ValueError, TypeError) as exc:
        e.append(f"policy.cem: {exc}")
    if len(pol.random.delta) != 3 or any(d < 0 for d in pol.random.delta):
        e.append("policy.random.delta: need three non-negative values")

    r = cfg.runner
    if not isinstance(r.seeds, list) or not r.seeds or not all(isinstance(x, int) for x in r.seeds):
        e.append("runner.seeds: need a non-empty list of integers")
    if r.space not in c.spaces:
        e.append(f"runner.space: unknown action space {r.space!r}")
    for name in r.compare:
        if name not in c.spaces:
            e.append(f"runner.compare: unknown action space {name!r}")
    if r.decimation < 1:
        e.append("runner.decimation: must be >= 1")
    if r.workers < 1:
        e.append("runner.workers: must be >= 1")
    return e


def _damping_step_errors(cfg: ExperimentConfig, dt: float) -> list[str]:
    """Largest reachable damping per task axis against the explicit update.

    Uses the task-space mobility ``J M^-1 J^T`` at the home configuration;
    for the floating body that is just ``1/mass`` and ``1/inertia``.  Only
    the spaces the runner actually uses are checked.
    """
    m = cfg.task_dim
    c = cfg.controller
    used = {cfg.runner.space, *cfg.runner.compare}
    k_top = np.zeros(m)
    for name, sp in c.spaces.items():
        if name not in used:
            continue
        if sp.kind == "aforce":
            k = _as_vec(c.aforce.k_max, m)
        elif sp.kind == "variable":
            k = _as_vec(sp.k_max, m)
        else:
            k = _as_vec(sp.stiffness, m)
        k_top = np.maximum(k_top, k)
    model = cfg.build_model()
    q = np.asarray(cfg.home(), dtype=float)
    terms = model.dynamics_terms(q, np.zeros(model.n))
    J = terms.J
    mobility = np.diag(J @ np.linalg.solve(terms.M, J.T))
    steps = 2.0 * np.sqrt(k_top) * dt * mobility
    return [f"controller.spaces: task axis {i} reaches damping step D*dt/m_eff = {v:.3g} > {DAMPING_STEP_BOUND}; "
            f"lower its stiffness bound or raise the plant inertia" for i, v in enumerate(steps) if v > DAMPING_STEP_BOUND]


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: config file not found"])
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return config_from_dict(raw)


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
