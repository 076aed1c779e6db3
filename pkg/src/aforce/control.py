"""Inner-loop control: impedance law, force-impedance adaptation, wrench PID
and the action spaces built from them.

All gains are diagonal and stored as m-vectors over the task coordinates of
the plant (6 for the floating body, 3 for the planar arm).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .plant import DynamicsTerms, PlantState
from .spatial import Pose, TaskError, Twist, Wrench, pose_error

FORCE_CAP = 50.0


def _vec(v, m: int) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        return np.full(m, float(a))
    if a.shape != (m,):
        raise ValueError(f"expected scalar or {m}-vector, got shape {a.shape}")
    return a.copy()


@dataclass(frozen=True)
class AdaptiveParams:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    mu: np.ndarray
    delta: float
    k_min: np.ndarray
    k_max: np.ndarray
    f_ff_max: np.ndarray

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "mu"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be >= 0")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")
        if np.any(self.k_min <= 0) or np.any(self.k_min > self.k_max):
            raise ValueError("need 0 < k_min <= k_max")
        if np.any(self.f_ff_max <= 0):
            raise ValueError("f_ff_max must be > 0")

    @classmethod
    def create(cls, m: int, alpha=100.0, beta=5000.0, gamma=100.0, mu=2.0, delta=0.016,
               k_min=10.0, k_max=2000.0, f_ff_max=30.0) -> "AdaptiveParams":
        return cls(_vec(alpha, m), _vec(beta, m), _vec(gamma, m), _vec(mu, m), float(delta),
                   _vec(k_min, m), _vec(k_max, m), _vec(f_ff_max, m))

    @property
    def m(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class GainState:
    K: np.ndarray
    D: np.ndarray
    F_ff: np.ndarray

    @classmethod
    def from_stiffness(cls, K, F_ff=None) -> "GainState":
        K = np.asarray(K, dtype=float)
        return cls(K, 2.0 * np.sqrt(K), np.zeros_like(K) if F_ff is None else np.asarray(F_ff, dtype=float))


@dataclass(frozen=True)
class Action:
    x_d: Pose
    F_d: Wrench = field(default_factory=Wrench)
    K_d: np.ndarray | None = None


def feedback_error(err: TaskError, delta: float, velocity_sign: float = -1.0) -> np.ndarray:
    """Composite error ``e + velocity_sign * delta * e_dot`` (default ``e - delta e_dot``)."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    return err.e + velocity_sign * delta * err.e_dot


def adapt_gains(gains: GainState, eps: np.ndarray, psi: AdaptiveParams, dt: float) -> GainState:
    """One explicit-Euler step of the stiffness and feedforward adaptation laws.

    Stiffness grows with ``beta |eps|`` and relaxes at the constant rate
    ``gamma``; the feedforward wrench integrates ``alpha eps`` and leaks at
    rate ``mu``.  Both are clamped, and damping follows ``D = 2 sqrt(K)``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    K = np.clip(gains.K + (psi.beta * np.abs(eps) - psi.gamma) * dt, psi.k_min, psi.k_max)
    F_ff = np.clip(gains.F_ff + (psi.alpha * eps - psi.mu * gains.F_ff) * dt, -psi.f_ff_max, psi.f_ff_max)
    return GainState(K, 2.0 * np.sqrt(K), F_ff)


def task_error(plant: PlantState, x_d: Pose, xd_dot: Twist, S: np.ndarray) -> TaskError:
    e6 = pose_error(plant.x, x_d)
    edot6 = plant.x_dot.to_vector() - xd_dot.to_vector()
    return TaskError(S @ e6, S @ edot6)


def task_wrench(err: TaskError, gains: GainState, F_d: np.ndarray) -> np.ndarray:
    """Input wrench ``-F_ff - F_d - K e - D e_dot`` in task coordinates."""
    return -gains.F_ff - F_d - gains.K * err.e - gains.D * err.e_dot


def impedance_torque(plant: PlantState, x_d: Pose, xd_dot: Twist, gains: GainState, F_d: Wrench,
                     terms: DynamicsTerms, gravity_compensation: bool = True,
                     err: TaskError | None = None) -> np.ndarray:
    if err is None:
        err = task_error(plant, x_d, xd_dot, terms.S)
    F = task_wrench(err, gains, terms.S @ F_d.to_vector())
    tau = terms.J.T @ F
    if gravity_compensation:
        tau = tau + terms.g
    return tau


@dataclass(frozen=True)
class PidState:
    kp: np.ndarray
    ki: np.ndarray
    kd: np.ndarray
    integral: np.ndarray = None
    previous_error: np.ndarray = None
    output_cap: float = FORCE_CAP
    integral_limit: float = 20.0
    primed: bool = False

    def __post_init__(self):
        for name in ("kp", "ki", "kd"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (6,):
                v = np.full(6, float(v))
            if np.any(v < 0):
                raise ValueError(f"{name} must be >= 0")
            object.__setattr__(self, name, v)
        if self.integral is None:
            object.__setattr__(self, "integral", np.zeros(6))
        if self.previous_error is None:
            object.__setattr__(self, "previous_error", np.zeros(6))

    def reset(self) -> "PidState":
        return replace(self, integral=np.zeros(6), previous_error=np.zeros(6), primed=False)


def regulate_wrench(F_meas: Wrench, F_d: Wrench, pid: PidState, dt: float, in_contact: bool) -> tuple[Wrench, PidState]:
    """PID on the contact wrench; ``F_meas`` is the wrench the surface exerts on the tool.

    Out of contact the desired wrench passes through unchanged and the
    integral is frozen.  The output is capped per axis at ``pid.output_cap``;
    the integrator stops accumulating on saturated axes.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    fd = F_d.to_vector()
    if not in_contact:
        return F_d, replace(pid, primed=False)
    err = fd - F_meas.to_vector()
    derr = (err - pid.previous_error) / dt if pid.primed else np.zeros(6)
    integral = np.clip(pid.integral + err * dt, -pid.integral_limit, pid.integral_limit)
    raw = fd + pid.kp * err + pid.ki * integral + pid.kd * derr
    cap = pid.output_cap
    out = np.clip(raw, -cap, cap)
    # anti-windup: keep the old integral where the output saturates in the error direction
    saturated = (np.abs(raw) > cap) & (np.sign(err) == np.sign(raw))
    integral = np.where(saturated, pid.integral, integral)
    return Wrench.from_vector(out), replace(pid, integral=integral, previous_error=err, primed=True)


class SpaceKind(str, Enum):
    FIXED = "fixed"
    VARIABLE = "variable"
    AFORCE = "aforce"


@dataclass(frozen=True)
class ActionSpace:
    """How a slow-loop action is turned into torques.

    ``force`` routes the action's desired wrench through the PID regulator;
    without it the wrench is applied open loop.  ``stiffness`` is the
    constant (fixed) or initial (aforce) diagonal stiffness.
    """

    name: str
    kind: SpaceKind
    stiffness: np.ndarray
    force: bool = False
    psi: AdaptiveParams | None = None
    k_bounds: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        if self.kind is SpaceKind.AFORCE and self.psi is None:
            raise ValueError("aforce space needs adaptive parameters")
        if self.kind is SpaceKind.VARIABLE and self.k_bounds is None:
            raise ValueError("variable space needs stiffness bounds")

    @property
    def has_stiffness_channel(self) -> bool:
        return self.kind is SpaceKind.VARIABLE


@dataclass(frozen=True)
class ControllerState:
    gains: GainState
    pid: PidState


class ActionContractError(ValueError):
    """The action does not fit the action space (a harness bug)."""


def initial_controller_state(space: ActionSpace, pid: PidState) -> ControllerState:
    return ControllerState(GainState.from_stiffness(space.stiffness), pid.reset())


def action_space_step(space: ActionSpace, action: Action, plant: PlantState, internal: ControllerState,
                      dt: float, terms: DynamicsTerms, x_d: Pose | None = None, xd_dot: Twist | None = None,
                      gravity_compensation: bool = True, epsilon_velocity_sign: float = -1.0,
                      contact_threshold: float = 1.0, err: TaskError | None = None,
                      ) -> tuple[np.ndarray, ControllerState, TaskError]:
    """One control tick.  ``x_d``/``xd_dot`` are the interpolated reference;
    they default to the raw action pose with zero velocity."""
    if action.K_d is not None and not space.has_stiffness_channel:
        raise ActionContractError(f"space {space.name!r} has no stiffness channel")
    if x_d is None:
        x_d = action.x_d
    if xd_dot is None:
        xd_dot = Twist()
    if err is None:
        err = task_error(plant, x_d, xd_dot, terms.S)
    gains = internal.gains
    if space.kind is SpaceKind.VARIABLE:
        lo, hi = space.k_bounds
        K = space.stiffness if action.K_d is None else np.clip(np.asarray(action.K_d, dtype=float), lo, hi)
        gains = GainState(K, 2.0 * np.sqrt(K), gains.F_ff)
    elif space.kind is SpaceKind.AFORCE:
        eps = feedback_error(err, space.psi.delta, epsilon_velocity_sign)
        gains = adapt_gains(gains, eps, space.psi, dt)
    pid = internal.pid
    F_d = action.F_d
    if space.force:
        in_contact = plant.f_ext.force[2] > contact_threshold
        F_d, pid = regulate_wrench(plant.f_ext, action.F_d, pid, dt, in_contact)
    tau = impedance_torque(plant, x_d, xd_dot, gains, F_d, terms, gravity_compensation, err=err)
    return tau, ControllerState(gains, pid), err
