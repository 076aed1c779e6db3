import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aforce.plant import (FloatingBody, NumericalBlowup, PlanarArm, Plant, SurfaceModel, contact_wrench)
from aforce.spatial import Pose, Twist

RNG = np.random.default_rng(20240601)
ARM = PlanarArm()


def _fd_jacobian(arm, q, h=1e-6):
    J = np.zeros((3, arm.n))
    for k in range(arm.n):
        dq = np.zeros(arm.n)
        dq[k] = h
        J[:, k] = (arm.planar_coordinates(q + dq) - arm.planar_coordinates(q - dq)) / (2 * h)
    return J


def test_planar_jacobian_matches_finite_differences():
    worst = 0.0
    for _ in range(1000):
        q = RNG.uniform(-np.pi, np.pi, 3)
        worst = max(worst, np.abs(ARM.jacobian(q) - _fd_jacobian(ARM, q)).max())
    assert worst <= 1e-5


def test_mass_matrix_symmetric_positive_definite():
    for _ in range(1000):
        M = ARM.mass_matrix(RNG.uniform(-np.pi, np.pi, 3))
        assert np.abs(M - M.T).max() < 1e-10
        assert np.linalg.eigvalsh(M).min() > 0


def test_mdot_minus_2c_is_skew():
    h = 1e-6
    for _ in range(200):
        q = RNG.uniform(-np.pi, np.pi, 3)
        qd = RNG.normal(0, 2, 3)
        v = RNG.normal(0, 1, 3)
        Mdot = (ARM.mass_matrix(q + h * qd) - ARM.mass_matrix(q - h * qd)) / (2 * h)
        C = ARM.dynamics_terms(q, qd).C
        assert abs(v @ (Mdot - 2 * C) @ v) < 1e-8


def test_mass_matrix_derivative_matches_finite_differences():
    h = 1e-6
    q = RNG.uniform(-np.pi, np.pi, 3)
    dM = ARM.mass_matrix_derivatives(q)
    for p in range(3):
        dq = np.zeros(3)
        dq[p] = h
        fd = (ARM.mass_matrix(q + dq) - ARM.mass_matrix(q - dq)) / (2 * h)
        assert np.allclose(dM[p], fd, atol=1e-7)


def test_gravity_is_gradient_of_potential():
    h = 1e-6
    q = RNG.uniform(-np.pi, np.pi, 3)
    fd = np.array([(ARM.potential_energy(q + h * e) - ARM.potential_energy(q - h * e)) / (2 * h) for e in np.eye(3)])
    assert np.allclose(ARM.gravity_torque(q), fd, atol=1e-6)


SURF = SurfaceModel(height=0.0, k_n=1e4, c_n=50.0, mu_t=20.0)


@given(st.floats(-0.05, 0.05), st.floats(-2.0, 2.0), st.floats(-1, 1), st.floats(-1, 1))
def test_contact_normal_force_sign(z, vz, vx, vy):
    w = contact_wrench(Pose([0.0, 0.0, z]), Twist([vx, vy, vz]), SURF)
    fn = w.force[2]
    d = SURF.height - z
    assert fn >= 0.0
    if d <= 0:
        assert np.all(w.to_vector() == 0.0)
    elif SURF.k_n * d - SURF.c_n * vz > 0:
        # penetrating and not separating faster than the spring can push back
        assert fn > 0.0
    assert np.all(w.torque == 0.0)


def test_contact_examples():
    assert np.all(contact_wrench(Pose([0, 0, 0.001]), Twist(), SURF).to_vector() == 0)
    assert contact_wrench(Pose([0, 0, -0.001]), Twist(), SURF).force[2] == pytest.approx(10.0)
    w = contact_wrench(Pose([0, 0, -0.001]), Twist([0.05, 0.0, 0.0]), SURF)
    assert w.force[0] == pytest.approx(-1.0)
    assert w.force[2] == pytest.approx(10.0)


def test_floating_body_equilibrium_is_unchanged():
    plant = Plant(FloatingBody(), None, joint_damping=0.0)
    s0 = plant.state_from_joints([0.1, 0.2, 0.3, 0.0, 0.0, 0.0])
    s1 = plant.step(s0, np.zeros(6), 1e-3)
    assert np.array_equal(s0.q, s1.q) and np.array_equal(s0.q_dot, s1.q_dot)


def test_newton_second_law():
    plant = Plant(FloatingBody(mass=1.0), None, joint_damping=0.0)
    s = plant.state_from_joints(np.zeros(6))
    tau = np.array([1.0, 0, 0, 0, 0, 0])
    for _ in range(1000):
        s = plant.step(s, tau, 1e-3)
    assert abs(s.q_dot[0] - 1.0) <= 1e-3


def test_planar_energy_decreases_with_joint_damping():
    plant = Plant(PlanarArm(gravity=True), None, joint_damping=0.5)
    s = plant.state_from_joints([0.3, 0.5, -0.4], [1.0, -1.0, 0.5])
    E = plant.mechanical_energy(s)
    for _ in range(2000):
        s = plant.step(s, np.zeros(3), 1e-4)
        E_new = plant.mechanical_energy(s)
        assert E_new <= E + 1e-9
        E = E_new


@given(st.integers(0, 2**32 - 1))
def test_step_is_bitwise_deterministic(seed):
    rng = np.random.default_rng(seed)
    plant = Plant(PlanarArm(), SurfaceModel(height=-0.5))
    q = rng.uniform(-1, 1, 3)
    qd = rng.normal(0, 1, 3)
    tau = rng.normal(0, 5, 3)
    a = plant.step(plant.state_from_joints(q, qd), tau, 1e-3)
    b = plant.step(plant.state_from_joints(q, qd), tau, 1e-3)
    assert np.array_equal(a.q, b.q) and np.array_equal(a.q_dot, b.q_dot)
    assert np.array_equal(a.f_ext.to_vector(), b.f_ext.to_vector())


def test_step_rejects_bad_input():
    plant = Plant(FloatingBody())
    s = plant.state_from_joints(np.zeros(6))
    with pytest.raises(ValueError):
        plant.step(s, np.zeros(6), 0.02)
    with pytest.raises(NumericalBlowup):
        plant.step(s, np.array([np.nan, 0, 0, 0, 0, 0]), 1e-3)
    with pytest.raises(NumericalBlowup):
        plant.step(s, np.full(6, 1e12), 1e-3)


def test_noise_draw_is_seeded():
    from aforce.plant import SensorNoise
    plant = Plant(FloatingBody(), noise=SensorNoise(0.02, 1.0))
    a = plant.draw_noise(np.random.Generator(np.random.Philox(3)), 50)
    b = plant.draw_noise(np.random.Generator(np.random.Philox(3)), 50)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    assert a[0].shape == (50, 6)
    assert plant.draw_noise(None, 50) == (None, None)
