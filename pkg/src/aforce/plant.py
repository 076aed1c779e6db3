"""Simulated manipulator dynamics with a planar contact surface.

Two models share one interface:

* ``FloatingBody`` -- a 6-DOF rigid body whose joint velocities are the
  end-effector twist (``J = I``).  Task space is the full 6-D twist space.
* ``PlanarArm`` -- an n-link arm moving in the vertical x-z plane under
  gravity.  Task space is ``(x, z, phi)`` where ``phi`` is the tool angle.

Both are integrated with semi-implicit Euler at the control period.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .spatial import Pose, Twist, Wrench, quat_from_rotvec, quat_mul, quat_normalize, quat_to_rotvec

GRAVITY = 9.81
BLOWUP_LIMIT = 1e6
SINGULAR_SIGMA = 1e-6


class NumericalBlowup(RuntimeError):
    """State left the finite/bounded region; the controller went unstable."""


@dataclass(frozen=True)
class SurfaceModel:
    height: float = 0.0
    k_n: float = 1e4
    c_n: float = 50.0
    mu_t: float = 10.0

    def __post_init__(self):
        if not self.k_n > 0:
            raise ValueError("surface k_n must be > 0")
        if self.c_n < 0 or self.mu_t < 0:
            raise ValueError("surface c_n and mu_t must be >= 0")


@dataclass(frozen=True)
class DynamicsTerms:
    M: np.ndarray
    C: np.ndarray
    g: np.ndarray
    J: np.ndarray
    # rows select task coordinates out of a 6-D pose error / twist / wrench
    S: np.ndarray
    singular: bool = False


@dataclass(frozen=True)
class PlantState:
    q: np.ndarray
    q_dot: np.ndarray
    x: Pose
    x_dot: Twist
    f_ext: Wrench = field(default_factory=Wrench)


def contact_wrench(x: Pose, x_dot: Twist, surface: SurfaceModel | None) -> Wrench:
    """Penalty contact with a horizontal plane at ``surface.height``.

    Normal force is a one-sided spring-damper ``k_n d - c_n z_dot`` (never
    pulling), tangential force is viscous ``-mu_t v_xy``.  No torques.
    """
    if surface is None:
        return Wrench()
    d = surface.height - x.position[2]
    if d <= 0.0:
        return Wrench()
    v = x_dot.linear
    fn = max(0.0, surface.k_n * d - surface.c_n * v[2])
    return Wrench(np.array([-surface.mu_t * v[0], -surface.mu_t * v[1], fn]))


def contact_force_normal(state: PlantState) -> float:
    return float(state.f_ext.force[2])


class FloatingBody:
    """Free rigid body with diagonal inertia; ``q = (position, rotation vector)``."""

    n = 6
    m = 6
    S = np.eye(6)

    def __init__(self, mass: float = 1.0, inertia: float = 0.1, gravity: bool = False):
        if mass <= 0 or inertia <= 0:
            raise ValueError("mass and inertia must be positive")
        self.mass = float(mass)
        self.inertia = float(inertia)
        self.gravity = bool(gravity)
        self._M = np.diag([mass, mass, mass, inertia, inertia, inertia]).astype(float)
        self._Minv = np.diag(1.0 / np.diag(self._M))
        self._g = np.array([0.0, 0.0, mass * GRAVITY if gravity else 0.0, 0.0, 0.0, 0.0])

    @property
    def min_task_mass(self) -> float:
        return self.mass

    def forward_kinematics(self, q: np.ndarray) -> Pose:
        return Pose(q[:3], quat_from_rotvec(q[3:6]))

    def jacobian(self, q: np.ndarray) -> np.ndarray:
        return np.eye(6)

    def ee_twist(self, q: np.ndarray, q_dot: np.ndarray) -> Twist:
        return Twist(q_dot[:3], q_dot[3:6])

    def dynamics_terms(self, q: np.ndarray, q_dot: np.ndarray) -> DynamicsTerms:
        return DynamicsTerms(self._M, np.zeros((6, 6)), self._g, np.eye(6), self.S)

    def solve_acceleration(self, terms: DynamicsTerms, rhs: np.ndarray) -> np.ndarray:
        return self._Minv @ rhs

    def integrate(self, state: PlantState, q_dot: np.ndarray, dt: float) -> tuple[np.ndarray, Pose]:
        pos = state.x.position + q_dot[:3] * dt
        # world-frame angular velocity: left-multiply the incremental rotation
        quat = quat_normalize(quat_mul(quat_from_rotvec(q_dot[3:6] * dt), state.x.orientation))
        q = np.concatenate([pos, quat_to_rotvec(quat)])
        return q, Pose(pos, quat)

    def potential_energy(self, q: np.ndarray) -> float:
        return self._g[2] * q[2]

    def kinetic_energy(self, q: np.ndarray, q_dot: np.ndarray) -> float:
        return 0.5 * float(q_dot @ self._M @ q_dot)


class PlanarArm:
    """n-link arm in the vertical x-z plane; angles measured from +x.

    Link ``i`` carries mass ``masses[i]`` at its midpoint and a rotational
    inertia ``inertias[i]`` about that point (defaults to a slender rod).
    """

    m = 3
    S = np.array(
        [
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, -1.0, 0.0],
        ]
    )

    def __init__(self, lengths=(0.4, 0.3, 0.2), masses=(2.0, 1.5, 1.0), inertias=None, gravity: bool = True):
        self.lengths = np.asarray(lengths, dtype=float)
        self.masses = np.asarray(masses, dtype=float)
        self.n = len(self.lengths)
        if len(self.masses) != self.n:
            raise ValueError("lengths and masses must have equal length")
        if inertias is None:
            inertias = self.masses * self.lengths**2 / 12.0
        self.inertias = np.asarray(inertias, dtype=float)
        self.gravity = bool(gravity)
        n = self.n
        # A[i, j]: lever of segment j in the COM position of link i
        A = np.zeros((n, n))
        for i in range(n):
            A[i, :i] = self.lengths[:i]
            A[i, i] = 0.5 * self.lengths[i]
        self._A = A
        # U[k, j] = 1 when joint k moves segment j
        self._U = np.triu(np.ones((n, n)))
        # UU[p, k, j] = U[k, j] * U[p, j]
        self._UU = self._U[:, None, :] * self._U[None, :, :]
        self._Iw = np.array([[self.inertias[max(k, l):].sum() for l in range(n)] for k in range(n)])
        self._g0 = GRAVITY if gravity else 0.0

    @property
    def min_task_mass(self) -> float:
        return float(self.masses[-1])

    def _angles(self, q):
        th = np.cumsum(q)
        return th, np.cos(th), np.sin(th)

    def forward_kinematics(self, q: np.ndarray) -> Pose:
        th, c, s = self._angles(q)
        x = float(self.lengths @ c)
        z = float(self.lengths @ s)
        return Pose(np.array([x, 0.0, z]), quat_from_rotvec(np.array([0.0, -th[-1], 0.0])))

    def planar_coordinates(self, q: np.ndarray) -> np.ndarray:
        th, c, s = self._angles(q)
        return np.array([self.lengths @ c, self.lengths @ s, th[-1]])

    def jacobian(self, q: np.ndarray) -> np.ndarray:
        th, c, s = self._angles(q)
        ls = self.lengths * s
        lc = self.lengths * c
        return np.vstack([-(self._U @ ls), self._U @ lc, np.ones(self.n)])

    def ee_twist(self, q: np.ndarray, q_dot: np.ndarray) -> Twist:
        v = self.jacobian(q) @ q_dot
        return Twist(np.array([v[0], 0.0, v[1]]), np.array([0.0, -v[2], 0.0]))

    def _com_jacobians(self, c, s):
        # Jv[i, k] = sum_j A[i, j] U[k, j] (-s_j, c_j)
        AU_s = np.einsum("ij,kj,j->ik", self._A, self._U, s)
        AU_c = np.einsum("ij,kj,j->ik", self._A, self._U, c)
        return -AU_s, AU_c

    def mass_matrix(self, q: np.ndarray) -> np.ndarray:
        th, c, s = self._angles(q)
        Jx, Jz = self._com_jacobians(c, s)
        return np.einsum("i,ik,il->kl", self.masses, Jx, Jx) + np.einsum("i,ik,il->kl", self.masses, Jz, Jz) + self._Iw

    def mass_matrix_derivatives(self, q: np.ndarray) -> np.ndarray:
        """``dM[p] = dM/dq_p``."""
        th, c, s = self._angles(q)
        Jx, Jz = self._com_jacobians(c, s)
        dJx = -np.einsum("ij,pkj,j->pik", self._A, self._UU, c)
        dJz = -np.einsum("ij,pkj,j->pik", self._A, self._UU, s)
        half = np.einsum("i,pik,il->pkl", self.masses, dJx, Jx) + np.einsum("i,pik,il->pkl", self.masses, dJz, Jz)
        return half + half.transpose(0, 2, 1)

    def gravity_torque(self, q: np.ndarray) -> np.ndarray:
        th, c, s = self._angles(q)
        _, Jz = self._com_jacobians(c, s)
        return self._g0 * (self.masses @ Jz)

    def dynamics_terms(self, q: np.ndarray, q_dot: np.ndarray) -> DynamicsTerms:
        dM = self.mass_matrix_derivatives(q)
        # Christoffel symbols of the first kind
        gamma = 0.5 * (dM.transpose(1, 2, 0) + dM.transpose(1, 0, 2) - dM)
        C = gamma @ q_dot
        J = self.jacobian(q)
        sigma_min = np.linalg.svd(J, compute_uv=False)[-1]
        return DynamicsTerms(self.mass_matrix(q), C, self.gravity_torque(q), J, self.S, bool(sigma_min < SINGULAR_SIGMA))

    def solve_acceleration(self, terms: DynamicsTerms, rhs: np.ndarray) -> np.ndarray:
        return np.linalg.solve(terms.M, rhs)

    def integrate(self, state: PlantState, q_dot: np.ndarray, dt: float) -> tuple[np.ndarray, Pose]:
        q = state.q + q_dot * dt
        return q, self.forward_kinematics(q)

    def potential_energy(self, q: np.ndarray) -> float:
        th, c, s = self._angles(q)
        z_com = self._A @ s
        return self._g0 * float(self.masses @ z_com)

    def kinetic_energy(self, q: np.ndarray, q_dot: np.ndarray) -> float:
        return 0.5 * float(q_dot @ self.mass_matrix(q) @ q_dot)


@dataclass(frozen=True)
class SensorNoise:
    """Gaussian measurement noise on joint velocities and the wrench estimate."""

    q_dot_sigma: float = 0.0
    wrench_sigma: float = 0.0

    @property
    def active(self) -> bool:
        return self.q_dot_sigma > 0 or self.wrench_sigma > 0


class Plant:
    """A model, an optional contact surface and joint viscous damping."""

    def __init__(self, model, surface: SurfaceModel | None = None, joint_damping: float = 0.01, noise: SensorNoise | None = None):
        self.model = model
        self.surface = surface
        self.joint_damping = float(joint_damping)
        self.noise = noise or SensorNoise()

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def m(self) -> int:
        return self.model.m

    @property
    def S(self) -> np.ndarray:
        return self.model.S

    def state_from_joints(self, q, q_dot=None) -> PlantState:
        q = np.asarray(q, dtype=float).copy()
        q_dot = np.zeros(self.n) if q_dot is None else np.asarray(q_dot, dtype=float).copy()
        x = self.model.forward_kinematics(q)
        x_dot = self.model.ee_twist(q, q_dot)
        return PlantState(q, q_dot, x, x_dot, contact_wrench(x, x_dot, self.surface))

    def dynamics_terms(self, q, q_dot) -> DynamicsTerms:
        return self.model.dynamics_terms(q, q_dot)

    def step(self, state: PlantState, tau_u: np.ndarray, dt: float, terms: DynamicsTerms | None = None) -> PlantState:
        if not 0.0 < dt <= 0.01:
            raise ValueError(f"dt must be in (0, 0.01], got {dt}")
        tau_u = np.asarray(tau_u, dtype=float)
        if not np.all(np.isfinite(tau_u)):
            raise NumericalBlowup("non-finite joint torque command")
        if terms is None:
            terms = self.model.dynamics_terms(state.q, state.q_dot)
        w = contact_wrench(state.x, state.x_dot, self.surface)
        tau_ext = terms.J.T @ (terms.S @ w.to_vector())
        rhs = tau_u + tau_ext - terms.C @ state.q_dot - terms.g - self.joint_damping * state.q_dot
        qdd = self.model.solve_acceleration(terms, rhs)
        q_dot = state.q_dot + qdd * dt
        if not np.all(np.isfinite(q_dot)) or np.abs(q_dot).max() > BLOWUP_LIMIT:
            raise NumericalBlowup("joint velocity diverged")
        q, x = self.model.integrate(state, q_dot, dt)
        if not np.all(np.isfinite(q)) or np.abs(q).max() > BLOWUP_LIMIT:
            raise NumericalBlowup("joint position diverged")
        x_dot = self.model.ee_twist(q, q_dot)
        return PlantState(q, q_dot, x, x_dot, contact_wrench(x, x_dot, self.surface))

    def draw_noise(self, rng: np.random.Generator | None, ticks: int) -> tuple[np.ndarray | None, np.ndarray | None]:
        """Noise samples for ``ticks`` control ticks (``None`` where disabled)."""
        if rng is None:
            return None, None
        qd = rng.normal(0.0, self.noise.q_dot_sigma, (ticks, self.n)) if self.noise.q_dot_sigma > 0 else None
        w = rng.normal(0.0, self.noise.wrench_sigma, (ticks, 6)) if self.noise.wrench_sigma > 0 else None
        return qd, w

    def measure(self, state: PlantState, q_dot_noise: np.ndarray | None = None,
                wrench_noise: np.ndarray | None = None) -> PlantState:
        """What the controller sees: the state with sensor noise added."""
        if q_dot_noise is None and wrench_noise is None:
            return state
        q_dot = state.q_dot
        x_dot = state.x_dot
        if q_dot_noise is not None:
            q_dot = q_dot + q_dot_noise
            x_dot = self.model.ee_twist(state.q, q_dot)
        f_ext = state.f_ext
        if wrench_noise is not None:
            f_ext = Wrench.from_vector(f_ext.to_vector() + wrench_noise)
        return replace(state, q_dot=q_dot, x_dot=x_dot, f_ext=f_ext)

    def mechanical_energy(self, state: PlantState) -> float:
        return self.model.kinetic_energy(state.q, state.q_dot) + self.model.potential_energy(state.q)
