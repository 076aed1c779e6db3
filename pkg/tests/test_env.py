import dataclasses

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from aforce.env import OBSERVATION_KEYS, Observation, PressEnv, PressTask, WipeEnv, WipeTask
from aforce.plant import FloatingBody, Plant

DT = 1e-3


def _wipe(**kw):
    env = WipeEnv(WipeTask(**kw), Plant(FloatingBody()), DT)
    state, obs = env.reset(np.random.default_rng(0))
    return env, state, obs


periods = st.lists(
    st.tuples(st.lists(st.floats(-0.05, 0.05), min_size=2, max_size=2), st.floats(0.0, 100.0)),
    min_size=1, max_size=200)


@given(periods)
def test_marker_count_never_increases(ticks):
    env, state, _ = _wipe()
    left = len(env.markers)
    for chunk in range(0, len(ticks), 50):
        part = ticks[chunk:chunk + 50]
        pos = np.array([[x, y, 0.0] for (x, y), _ in part])
        fn = np.array([f for _, f in part])
        obs, out = env.step(pos, fn, state)
        assert len(env.markers) <= left
        assert out.markers_removed_this_step == left - len(env.markers)
        left = len(env.markers)


@given(st.lists(st.floats(0.0, 60.0), min_size=1, max_size=50))
def test_no_penalty_at_or_below_threshold(fn):
    env, state, _ = _wipe()
    _, out = env.step(np.zeros((len(fn), 3)), np.array(fn), state)
    assert out.penalty == 0.0


def test_penalty_integrates_excess_force():
    env, state, _ = _wipe()
    _, out = env.step(np.zeros((50, 3)), np.full(50, 70.0), state)
    assert out.penalty == -10.0 * 50 * DT


def test_markers_only_removed_with_enough_force():
    env, state, _ = _wipe(marker_region=(0.0, 0.0, 0.0, 0.0), n_markers=3)
    _, out = env.step(np.zeros((10, 3)), np.full(10, 10.0), state)
    assert out.markers_removed_this_step == 0
    _, out = env.step(np.zeros((10, 3)), np.full(10, 80.0), state)
    assert out.markers_removed_this_step == 0
    _, out = env.step(np.zeros((10, 3)), np.full(10, 20.0), state)
    assert out.markers_removed_this_step == 3 and out.success and out.done


def test_observation_carries_no_controller_state():
    env, state, obs = _wipe()
    names = {f.name for f in dataclasses.fields(Observation)}
    assert names == set(OBSERVATION_KEYS)
    row = obs.to_row()
    assert all(k.startswith("obs_") for k in row)
    assert not any(("K" in k) or ("ff" in k.lower()) for k in row)


def test_press_success_after_hold_time():
    task = PressTask(target_region=(0.0, 0.0, 0.0, 0.0), hold_time=0.1)
    env = PressEnv(task, Plant(FloatingBody()), DT)
    state, _ = env.reset(np.random.default_rng(1))
    _, out = env.step(np.zeros((50, 3)), np.full(50, 6.0), state)
    assert not out.success
    _, out = env.step(np.zeros((50, 3)), np.full(50, 6.0), state)
    assert out.success and out.done
    env.reset(np.random.default_rng(1))
    _, out = env.step(np.zeros((50, 3)), np.r_[np.full(49, 6.0), 1.0], state)
    assert env.held == 0.0


def test_episode_ends_at_length():
    env, state, _ = _wipe(episode_length=2, stop_when_clear=False)
    assert not env.step(np.zeros((1, 3)), np.zeros(1), state)[1].done
    assert env.step(np.zeros((1, 3)), np.zeros(1), state)[1].done
