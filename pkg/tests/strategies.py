"""Hypothesis strategies shared by the property tests."""
import numpy as np
from hypothesis import strategies as st

from aforce.spatial import Pose, quat_normalize

finite = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False)
vec3 = st.lists(finite, min_size=3, max_size=3).map(np.array)


@st.composite
def unit_quats(draw):
    v = np.array(draw(st.lists(st.floats(-1.0, 1.0), min_size=4, max_size=4)))
    if np.linalg.norm(v) < 1e-3:
        v = np.array([1.0, 0.0, 0.0, 0.0])
    return quat_normalize(v)


@st.composite
def poses(draw):
    return Pose(draw(vec3), draw(unit_quats()))



@st.composite
def near_poses(draw, reach: float = 0.2):
    """Poses within ``reach`` metres of the origin, for trajectory tests."""
    p = np.array(draw(st.lists(st.floats(-reach, reach), min_size=3, max_size=3)))
    return Pose(p, draw(unit_quats()))


def small_config(**overrides):
    """A short noisy floating-body wipe experiment, as a raw config dict.

    ``overrides`` maps dotted paths (``"task.wipe.episode_length"``) to values.
    """
    raw = {
        "plant": {"model": "floating", "q_dot_noise": 0.02, "wrench_noise": 1.0},
        "controller": {"aforce": {"beta": [1e5, 1e5, 5e5, 5000.0, 5000.0, 5000.0],
                                  "gamma": [100.0, 100.0, 4000.0, 100.0, 100.0, 100.0], "k_init": 10.0}},
        "task": {"kind": "wipe", "wipe": {"episode_length": 30}},
        "policy": {"kind": "expert"},
        "runner": {"seeds": [0, 1], "space": "aforce+force", "compare": ["high", "aforce+force"]},
    }
    for path, value in overrides.items():
        node = raw
        *head, last = path.split(".")
        for key in head:
            node = node.setdefault(key, {})
        node[last] = value
    return raw
