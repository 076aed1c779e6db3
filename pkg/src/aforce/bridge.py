"""Rate bridge between 20 Hz actions and the kHz control loop.

Each new action starts a straight-line segment from the current setpoint to
the action pose (slerp for orientation).  A segment lasts one policy period
unless that would exceed the velocity clamp, in which case it is stretched.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .spatial import Pose, Twist, quat_angle, quat_conj, quat_mul, quat_to_rotvec, slerp

POLICY_PERIOD = 0.05


@dataclass(frozen=True)
class ReferenceTrack:
    x_ref: Pose
    xd_ref: Twist
    start: Pose
    target: Pose
    duration: float
    elapsed: float
    max_linear: float = 1.0
    max_angular: float = 2.0

    @classmethod
    def hold(cls, pose: Pose, max_linear: float = 1.0, max_angular: float = 2.0) -> "ReferenceTrack":
        return cls(pose, Twist(), pose, pose, POLICY_PERIOD, POLICY_PERIOD, max_linear, max_angular)

    def _segment_twist(self) -> Twist:
        lin = (self.target.position - self.start.position) / self.duration
        rel = quat_mul(self.target.orientation, quat_conj(self.start.orientation))
        ang = quat_to_rotvec(rel) / self.duration
        return Twist(lin, ang)


def set_target(track: ReferenceTrack, action_pose: Pose, period: float = POLICY_PERIOD) -> ReferenceTrack:
    start = track.x_ref
    dist = float(np.linalg.norm(action_pose.position - start.position))
    angle = quat_angle(start.orientation, action_pose.orientation)
    duration = max(period, dist / track.max_linear, angle / track.max_angular)
    return replace(track, start=start, target=action_pose, duration=duration, elapsed=0.0)


def sample(track: ReferenceTrack, dt: float) -> tuple[Pose, Twist, ReferenceTrack]:
    """Advance by one control period and return the setpoint and its velocity."""
    if track.elapsed >= track.duration:
        new = replace(track, x_ref=track.target, xd_ref=Twist(), elapsed=track.duration)
        return new.x_ref, new.xd_ref, new
    elapsed = min(track.elapsed + dt, track.duration)
    s = elapsed / track.duration
    pos = track.start.position + s * (track.target.position - track.start.position)
    quat = slerp(track.start.orientation, track.target.orientation, s)
    x_ref = Pose(pos, quat)
    xd_ref = track._segment_twist()
    new = replace(track, x_ref=x_ref, xd_ref=xd_ref, elapsed=elapsed)
    return x_ref, xd_ref, new
