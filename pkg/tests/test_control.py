import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aforce.control import (Action, ActionContractError, ActionSpace, AdaptiveParams, GainState, PidState, SpaceKind,
                            action_space_step, adapt_gains, feedback_error, impedance_torque,
                            initial_controller_state, regulate_wrench)
from aforce.plant import FloatingBody, PlanarArm, Plant
from aforce.spatial import Pose, TaskError, Twist, Wrench

DT = 1e-3
PSI = AdaptiveParams.create(6, alpha=100.0, beta=5000.0, gamma=100.0, mu=2.0, k_min=10.0, k_max=2000.0, f_ff_max=30.0)

eps_seq = st.lists(st.lists(st.floats(-0.5, 0.5), min_size=6, max_size=6), min_size=1, max_size=40).map(np.array)


def test_feedforward_matches_closed_form():
    # constant eps: F_ff(t) = (alpha/mu) eps (1 - exp(-mu t))
    psi = AdaptiveParams.create(6, alpha=100.0, beta=0.0, gamma=0.0, mu=2.0, f_ff_max=1e6)
    eps = np.array([0.01, -0.02, 0.005, 0.0, 0.03, -0.01])
    g = GainState.from_stiffness(np.full(6, 100.0))
    T = 5.0 / 2.0
    for _ in range(int(round(T / DT))):
        g = adapt_gains(g, eps, psi, DT)
    exact = 100.0 / 2.0 * eps * (1 - np.exp(-2.0 * T))
    steady = np.abs(100.0 / 2.0 * eps).max()
    assert np.abs(g.F_ff - exact).max() < 0.01 * steady


def test_stiffness_matches_clamped_linear_closed_form():
    eps = np.array([0.1, 0.01, 0.02, 0.0, 0.05, 0.03])
    g = GainState.from_stiffness(np.full(6, 500.0))
    rate = PSI.beta * np.abs(eps) - PSI.gamma
    for n in range(1, 3001):
        g = adapt_gains(g, eps, PSI, DT)
        exact = np.clip(500.0 + rate * n * DT, PSI.k_min, PSI.k_max)
        assert np.abs(g.K - exact).max() <= 1e-6


@given(eps_seq, st.floats(10.0, 2000.0))
def test_gain_invariants_hold_after_every_update(seq, k0):
    g = GainState.from_stiffness(np.full(6, k0))
    for eps in seq:
        g = adapt_gains(g, eps, PSI, DT)
        assert np.all(g.K >= PSI.k_min) and np.all(g.K <= PSI.k_max)
        assert np.all(np.abs(g.F_ff) <= PSI.f_ff_max)
        assert np.array_equal(g.D, 2.0 * np.sqrt(g.K))


@given(eps_seq, st.floats(10.0, 2000.0))
def test_zero_rates_are_the_identity(seq, k0):
    psi = AdaptiveParams.create(6, alpha=0.0, beta=0.0, gamma=0.0, mu=0.0)
    g0 = GainState(np.full(6, k0), 2 * np.sqrt(np.full(6, k0)), np.linspace(-1, 1, 6))
    g = g0
    for eps in seq:
        g = adapt_gains(g, eps, psi, DT)
    assert np.array_equal(g.K, g0.K) and np.array_equal(g.F_ff, g0.F_ff) and np.array_equal(g.D, g0.D)


@given(eps_seq, st.lists(st.floats(1.0, 3.0), min_size=6, max_size=6).map(np.array))
def test_stiffness_monotone_in_error_magnitude(seq, gain):
    small = GainState.from_stiffness(np.full(6, 300.0))
    big = small
    for eps in seq:
        small = adapt_gains(small, eps, PSI, DT)
        big = adapt_gains(big, eps * gain, PSI, DT)
        assert np.all(big.K >= small.K)


def test_feedback_error_sign_convention():
    err = TaskError(np.ones(6), np.full(6, 2.0))
    assert np.allclose(feedback_error(err, 0.1), 1.0 - 0.2)
    assert np.allclose(feedback_error(err, 0.1, +1.0), 1.0 + 0.2)
    with pytest.raises(ValueError):
        feedback_error(err, 0.0)


vec3 = st.lists(st.floats(-1, 1), min_size=3, max_size=3).map(np.array)
vec6 = st.lists(st.floats(-1, 1), min_size=6, max_size=6).map(np.array)


@given(vec3, vec3, vec3, vec3, vec6, vec6, vec3)
def test_impedance_torque_superposition(e1, e2, ed1, ed2, f1, f2, q):
    arm = PlanarArm()
    plant = Plant(arm)
    state = plant.state_from_joints(q)
    terms = arm.dynamics_terms(q, np.zeros(3))
    K = np.array([300.0, 500.0, 5.0])
    ff1, ff2 = e1[::-1], ed2 * 0.5

    def tau(e, ed, ff, fd):
        g = GainState(K, 2 * np.sqrt(K), ff)
        return impedance_torque(state, Pose.identity(), Twist(), g, Wrench.from_vector(fd), terms,
                                gravity_compensation=False, err=TaskError(e, ed))

    both = tau(e1 + e2, ed1 + ed2, ff1 + ff2, f1 + f2)
    assert np.allclose(both, tau(e1, ed1, ff1, f1) + tau(e2, ed2, ff2, f2), atol=1e-9)


def test_fixed_impedance_is_passive_on_the_floating_body():
    body = FloatingBody(mass=1.0, inertia=0.1)
    plant = Plant(body, None, joint_damping=0.0)
    space = ActionSpace("fixed", SpaceKind.FIXED, np.array([800.0, 800.0, 800.0, 50.0, 50.0, 50.0]))
    cstate = initial_controller_state(space, PidState(0.0, 0.0, 0.0))
    state = plant.state_from_joints([0.05, -0.03, 0.02, 0.2, -0.1, 0.15], [0.3, 0.1, -0.2, 1.0, 0.5, -0.5])
    action = Action(Pose.identity())
    M = np.diag([1.0, 1.0, 1.0, 0.1, 0.1, 0.1])

    def energy(s, err):
        return 0.5 * s.q_dot @ M @ s.q_dot + 0.5 * np.sum(space.stiffness * err.e ** 2)

    prev = None
    for _ in range(3000):
        terms = plant.dynamics_terms(state.q, state.q_dot)
        tau, cstate, err = action_space_step(space, action, state, cstate, DT, terms)
        E = energy(state, err)
        if prev is not None:
            assert E <= prev + 1e-6
        prev = E
        state = plant.step(state, tau, DT, terms)


def test_pid_passes_through_out_of_contact_and_caps():
    pid = PidState([0.0, 0.0, 0.5, 0.0, 0.0, 0.0], 0.0, 0.0)
    fd = Wrench([0.0, 0.0, 10.0])
    out, pid2 = regulate_wrench(Wrench(), fd, pid, DT, in_contact=False)
    assert np.array_equal(out.to_vector(), fd.to_vector())
    assert not pid2.primed
    out, _ = regulate_wrench(Wrench([0.0, 0.0, 2.0]), fd, pid, DT, in_contact=True)
    assert out.force[2] == pytest.approx(10.0 + 0.5 * 8.0)
    out, _ = regulate_wrench(Wrench([0.0, 0.0, -200.0]), Wrench([0.0, 0.0, 40.0]), pid, DT, in_contact=True)
    assert out.force[2] == pytest.approx(50.0)


def test_pid_integral_freezes_on_saturation():
    pid = PidState(0.0, [0.0, 0.0, 1000.0, 0.0, 0.0, 0.0], 0.0)
    for _ in range(100):
        out, pid = regulate_wrench(Wrench(), Wrench([0.0, 0.0, 45.0]), pid, DT, in_contact=True)
    assert out.force[2] == 50.0
    assert pid.integral[2] < 0.02


def test_stiffness_action_only_on_variable_spaces():
    plant = Plant(FloatingBody())
    state = plant.state_from_joints(np.zeros(6))
    terms = plant.dynamics_terms(state.q, state.q_dot)
    aforce = ActionSpace("a", SpaceKind.AFORCE, np.full(6, 10.0), psi=PSI)
    cstate = initial_controller_state(aforce, PidState(0.0, 0.0, 0.0))
    with pytest.raises(ActionContractError):
        action_space_step(aforce, Action(Pose.identity(), K_d=np.full(6, 100.0)), state, cstate, DT, terms)
    var = ActionSpace("v", SpaceKind.VARIABLE, np.full(6, 100.0), k_bounds=(np.full(6, 10.0), np.full(6, 2000.0)))
    cstate = initial_controller_state(var, PidState(0.0, 0.0, 0.0))
    _, out, _ = action_space_step(var, Action(Pose.identity(), K_d=np.full(6, 1e5)), state, cstate, DT, terms)
    assert np.all(out.gains.K == 2000.0)


def test_adaptive_params_validation():
    with pytest.raises(ValueError):
        AdaptiveParams.create(6, k_min=100.0, k_max=10.0)
    with pytest.raises(ValueError):
        AdaptiveParams.create(6, beta=-1.0)
    with pytest.raises(ValueError):
        AdaptiveParams.create(6, delta=0.0)
