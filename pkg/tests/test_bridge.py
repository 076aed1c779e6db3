import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from aforce.bridge import ReferenceTrack, sample, set_target
from aforce.spatial import Pose, quat_angle

from .strategies import near_poses as poses

DT = 1e-3


@given(poses(), poses(), st.floats(0.1, 2.0), st.floats(0.2, 4.0))
def test_reference_is_continuous_and_velocity_bounded(a, b, v_lin, v_ang):
    track = set_target(ReferenceTrack.hold(a, v_lin, v_ang), b)
    prev = a
    for _ in range(int(track.duration / DT) + 5):
        x, _, track = sample(track, DT)
        assert np.linalg.norm(x.position - prev.position) <= v_lin * DT + 1e-12
        assert quat_angle(x.orientation, prev.orientation) <= v_ang * DT + 1e-7
        prev = x
    assert x.isclose(b, atol=1e-9)


@given(poses(), poses())
def test_sample_is_deterministic(a, b):
    t1 = set_target(ReferenceTrack.hold(a), b)
    t2 = set_target(ReferenceTrack.hold(a), b)
    for _ in range(30):
        x1, v1, t1 = sample(t1, DT)
        x2, v2, t2 = sample(t2, DT)
        assert np.array_equal(x1.to_vector(), x2.to_vector())
        assert np.array_equal(v1.to_vector(), v2.to_vector())


@given(poses(), poses())
def test_holding_after_segment_end_is_idempotent(a, b):
    track = set_target(ReferenceTrack.hold(a), b)
    while track.elapsed < track.duration:
        _, _, track = sample(track, DT)
    x1, v1, t1 = sample(track, DT)
    x2, v2, t2 = sample(t1, DT)
    assert np.array_equal(x1.to_vector(), x2.to_vector())
    assert np.all(v1.to_vector() == 0) and np.all(v2.to_vector() == 0)
    assert t1.elapsed == t2.elapsed == t1.duration
    assert np.array_equal(t1.x_ref.to_vector(), t2.x_ref.to_vector())


def test_short_moves_take_one_policy_period():
    a = Pose([0.0, 0.0, 0.0])
    b = Pose([0.01, 0.0, 0.0])
    track = set_target(ReferenceTrack.hold(a), b)
    assert track.duration == 0.05
    x, v, _ = sample(track, DT)
    assert np.allclose(v.linear, [0.2, 0.0, 0.0])
    assert np.allclose(x.position, [0.0002, 0.0, 0.0])
