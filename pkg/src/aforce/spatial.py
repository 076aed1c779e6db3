"""Poses, twists, wrenches and task-space error.

Quaternions are stored scalar-first ``(w, x, y, z)`` everywhere.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_EPS = 1e-12

POSE_COLUMNS = ("px", "py", "pz", "qw", "qx", "qy", "qz")


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if not n > _EPS:
        raise ValueError(f"cannot normalize quaternion {q}")
    return q / n


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Return ``q`` or ``-q``, whichever has a non-negative scalar part."""
    return -q if q[0] < 0.0 else q


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_from_rotvec(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    angle = np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if angle < 1e-8:
        # second-order expansion keeps the result unit-norm to machine precision
        q = np.array([1.0 - angle * angle / 8.0, 0.5 * v[0], 0.5 * v[1], 0.5 * v[2]])
        return quat_normalize(q)
    s = np.sin(0.5 * angle) / angle
    return np.array([np.cos(0.5 * angle), s * v[0], s * v[1], s * v[2]])


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Axis-angle vector of ``q`` with the angle wrapped to ``[0, pi]``."""
    q = quat_canonical(q)
    vn = np.sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if vn < 1e-12:
        return 2.0 * np.array([q[1], q[2], q[3]])
    angle = 2.0 * np.arctan2(vn, q[0])
    return (angle / vn) * np.array([q[1], q[2], q[3]])


def quat_angle(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle between two unit quaternions, ``2 acos |<a, b>|``."""
    d = abs(float(np.dot(a, b)))
    return 2.0 * float(np.arccos(min(1.0, d)))


def slerp(q0: np.ndarray, q1: np.ndarray, s: float) -> np.ndarray:
    """Shortest-path spherical interpolation, ``s`` in ``[0, 1]``."""
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-12:
        return quat_normalize(q0 + s * (q1 - q0))
    theta = np.arccos(d)
    st = np.sin(theta)
    return (np.sin((1.0 - s) * theta) * q0 + np.sin(s * theta) * q1) / st


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    return quat_from_rotvec(axis / np.linalg.norm(axis) * angle)


@dataclass(frozen=True, slots=True)
class Pose:
    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        object.__setattr__(self, "orientation", quat_normalize(q))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3))

    def to_vector(self) -> np.ndarray:
        """7 numbers ``(px, py, pz, qw, qx, qy, qz)`` with canonical quaternion sign."""
        return np.concatenate([self.position, quat_canonical(self.orientation)])

    @classmethod
    def from_vector(cls, v) -> "Pose":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:7])

    def isclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.position, other.position, atol=atol)
            and quat_angle(self.orientation, other.orientation) <= max(atol, 1e-7)
        )


@dataclass(frozen=True, slots=True)
class Twist:
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=float).reshape(3)
        ang = np.asarray(self.angular, dtype=float).reshape(3)
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(ang))):
            raise ValueError("twist components must be finite")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "angular", ang)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @classmethod
    def from_vector(cls, v) -> "Twist":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])


@dataclass(frozen=True, slots=True)
class Wrench:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        f = np.asarray(self.force, dtype=float).reshape(3)
        t = np.asarray(self.torque, dtype=float).reshape(3)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t))):
            raise ValueError("wrench components must be finite")
        object.__setattr__(self, "force", f)
        object.__setattr__(self, "torque", t)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    @classmethod
    def from_vector(cls, v) -> "Wrench":
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])


@dataclass(frozen=True, slots=True)
class TaskError:
    """Pose error ``e`` and twist error ``e_dot`` in task coordinates."""

    e: np.ndarray
    e_dot: np.ndarray


def pose_error(x: Pose, x_d: Pose) -> np.ndarray:
    """6-vector ``x - x_d``: position difference, then the axis-angle vector
    of ``x.orientation * conj(x_d.orientation)``."""
    q_err = quat_mul(x.orientation, quat_conj(x_d.orientation))
    out = np.empty(6)
    out[:3] = x.position - x_d.position
    out[3:] = quat_to_rotvec(q_err)
    return out


def twist_error(x_dot: Twist, xd_dot: Twist) -> np.ndarray:
    return x_dot.to_vector() - xd_dot.to_vector()


def tracking_error_metric(e: np.ndarray) -> float:
    """L1 norm of the translational error plus the rotation angle."""
    e = np.asarray(e, dtype=float)
    return float(np.abs(e[:3]).sum() + np.linalg.norm(e[3:6]))
