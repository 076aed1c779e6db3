"""Compiled control-tick loop for the floating-body plant.

Mirrors, operation for operation, the reference path in ``runner`` built
from ``bridge.sample``, ``control.action_space_step`` and ``Plant.step``;
``tests/test_fastloop.py`` checks the two agree.  Used only for speed.
"""
from __future__ import annotations

import numpy as np
from numba import njit

OK = 0
BLOWUP_VELOCITY = 1
BLOWUP_POSITION = 2
BAD_TORQUE = 3
LIMIT = 1e6

KIND_FIXED = 0
KIND_VARIABLE = 1
KIND_AFORCE = 2


@njit(cache=True)
def _normalize(q):
    n = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return q / n


@njit(cache=True)
def _qmul(a, b):
    out = np.empty(4)
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return out


@njit(cache=True)
def _conj(q):
    out = np.empty(4)
    out[0] = q[0]
    out[1] = -q[1]
    out[2] = -q[2]
    out[3] = -q[3]
    return out


@njit(cache=True)
def _to_rotvec(q):
    if q[0] < 0.0:
        q = -q
    vn = np.sqrt(q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    out = np.empty(3)
    if vn < 1e-12:
        out[0] = 2.0 * q[1]
        out[1] = 2.0 * q[2]
        out[2] = 2.0 * q[3]
        return out
    angle = 2.0 * np.arctan2(vn, q[0])
    s = angle / vn
    out[0] = s * q[1]
    out[1] = s * q[2]
    out[2] = s * q[3]
    return out


@njit(cache=True)
def _from_rotvec(v):
    angle = np.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    q = np.empty(4)
    if angle < 1e-8:
        q[0] = 1.0 - angle * angle / 8.0
        q[1] = 0.5 * v[0]
        q[2] = 0.5 * v[1]
        q[3] = 0.5 * v[2]
        return _normalize(q)
    s = np.sin(0.5 * angle) / angle
    q[0] = np.cos(0.5 * angle)
    q[1] = s * v[0]
    q[2] = s * v[1]
    q[3] = s * v[2]
    return q


@njit(cache=True)
def _slerp(q0, q1, s):
    d = q0[0] * q1[0] + q0[1] * q1[1] + q0[2] * q1[2] + q0[3] * q1[3]
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-12:
        return _normalize(q0 + s * (q1 - q0))
    theta = np.arccos(d)
    st = np.sin(theta)
    return (np.sin((1.0 - s) * theta) * q0 + np.sin(s * theta) * q1) / st


@njit(cache=True)
def _contact(pos, vel, surf, out):
    for i in range(6):
        out[i] = 0.0
    if surf[0] == 0.0:
        return
    d = surf[1] - pos[2]
    if d <= 0.0:
        return
    fn = surf[2] * d - surf[3] * vel[2]
    if fn < 0.0:
        fn = 0.0
    out[0] = -surf[4] * vel[0]
    out[1] = -surf[4] * vel[1]
    out[2] = fn


@njit(cache=True)
def run_period(
    n_ticks, dt,
    pos, quat, qd, f_ext,
    body, surf,
    kind, force, grav_comp, eps_sign, contact_threshold,
    psi, stiffness, k_lo, k_hi,
    K, D, F_ff,
    pid_gains, pid_state, pid_scalars,
    track_start, track_target, track_times, xref_out,
    F_d_action, K_d_action, has_Kd,
    qd_noise, w_noise,
    logs, offset,
):
    """Advance ``n_ticks`` control ticks in place.

    body = [mass, inertia, gravity_z, joint_damping]
    surf = [enabled, height, k_n, c_n, mu_t]
    psi rows = alpha, beta, gamma, mu, k_min, k_max, f_ff_max; delta in pid_scalars[3]
    pid_gains rows = kp, ki, kd; pid_state rows = integral, previous_error, [primed, ...]
    pid_scalars = [output_cap, integral_limit, unused, delta]
    track_start/target = 7-vectors (pos, quat); track_times = [duration, elapsed];
    xref_out receives the latest setpoint (pos, quat)
    logs = (tau, qdot, e, xdot, K, F_ff, wrench, setpoint, pose) arrays
    Returns (ticks done, status, energy increment, tracking increment).
    """
    tau_log, qd_log, e_log, xd_log, K_log, F_log, w_log, sp_log, pose_log = logs
    mass = body[0]
    inertia = body[1]
    gz = body[2]
    damping = body[3]
    cap = pid_scalars[0]
    ilim = pid_scalars[1]
    delta = pid_scalars[3]
    energy = 0.0
    tracking = 0.0
    minv = np.array([1.0 / mass, 1.0 / mass, 1.0 / mass, 1.0 / inertia, 1.0 / inertia, 1.0 / inertia])
    g = np.zeros(6)
    g[2] = gz
    x_ref_pos = np.empty(3)
    x_ref_q = np.empty(4)
    xd_ref = np.zeros(6)
    e = np.empty(6)
    edot = np.empty(6)
    tau = np.empty(6)
    w = np.empty(6)
    Fd = np.empty(6)
    for t in range(n_ticks):
        # reference sample
        duration = track_times[0]
        elapsed = track_times[1]
        if elapsed >= duration:
            track_times[1] = duration
            x_ref_pos[:] = track_target[:3]
            x_ref_q[:] = track_target[3:]
            for i in range(6):
                xd_ref[i] = 0.0
        else:
            elapsed = min(elapsed + dt, duration)
            track_times[1] = elapsed
            s = elapsed / duration
            for i in range(3):
                x_ref_pos[i] = track_start[i] + s * (track_target[i] - track_start[i])
            x_ref_q[:] = _normalize(_slerp(track_start[3:], track_target[3:], s))
            for i in range(3):
                xd_ref[i] = (track_target[i] - track_start[i]) / duration
            rel = _qmul(track_target[3:], _conj(track_start[3:]))
            rv = _to_rotvec(rel)
            for i in range(3):
                xd_ref[3 + i] = rv[i] / duration
        xref_out[:3] = x_ref_pos
        xref_out[3:] = x_ref_q
        # measurement
        e[:3] = pos - x_ref_pos
        e[3:] = _to_rotvec(_qmul(quat, _conj(x_ref_q)))
        for i in range(6):
            edot[i] = (qd[i] + qd_noise[t, i]) - xd_ref[i]
        # gains
        if kind == KIND_VARIABLE:
            for i in range(6):
                if has_Kd:
                    K[i] = min(max(K_d_action[i], k_lo[i]), k_hi[i])
                else:
                    K[i] = stiffness[i]
                D[i] = 2.0 * np.sqrt(K[i])
        elif kind == KIND_AFORCE:
            sd = eps_sign * delta
            for i in range(6):
                eps = e[i] + sd * edot[i]
                k_new = K[i] + (psi[1, i] * abs(eps) - psi[2, i]) * dt
                K[i] = min(max(k_new, psi[4, i]), psi[5, i])
                f_new = F_ff[i] + (psi[0, i] * eps - psi[3, i] * F_ff[i]) * dt
                F_ff[i] = min(max(f_new, -psi[6, i]), psi[6, i])
                D[i] = 2.0 * np.sqrt(K[i])
        # wrench regulation
        for i in range(6):
            Fd[i] = F_d_action[i]
        if force:
            fz_meas = f_ext[2] + w_noise[t, 2]
            if fz_meas > contact_threshold:
                primed = pid_state[2, 0] != 0.0
                for i in range(6):
                    err = F_d_action[i] - (f_ext[i] + w_noise[t, i])
                    derr = (err - pid_state[1, i]) / dt if primed else 0.0
                    integ = min(max(pid_state[0, i] + err * dt, -ilim), ilim)
                    raw = F_d_action[i] + pid_gains[0, i] * err + pid_gains[1, i] * integ + pid_gains[2, i] * derr
                    out = min(max(raw, -cap), cap)
                    if not (abs(raw) > cap and np.sign(err) == np.sign(raw)):
                        pid_state[0, i] = integ
                    pid_state[1, i] = err
                    Fd[i] = out
                pid_state[2, 0] = 1.0
            else:
                pid_state[2, 0] = 0.0
        # impedance law
        for i in range(6):
            tau[i] = -F_ff[i] - Fd[i] - K[i] * e[i] - D[i] * edot[i]
            if grav_comp:
                tau[i] = tau[i] + g[i]
        for i in range(6):
            if not np.isfinite(tau[i]):
                return t, BAD_TORQUE, energy, tracking
        # plant step
        _contact(pos, qd, surf, w)
        bad = False
        for i in range(6):
            rhs = tau[i] + w[i] - 0.0 - g[i] - damping * qd[i]
            qd[i] = qd[i] + (rhs * minv[i]) * dt
            if not np.isfinite(qd[i]) or abs(qd[i]) > LIMIT:
                bad = True
        if bad:
            return t, BLOWUP_VELOCITY, energy, tracking
        for i in range(3):
            pos[i] = pos[i] + qd[i] * dt
        omega_dt = np.empty(3)
        for i in range(3):
            omega_dt[i] = qd[3 + i] * dt
        quat[:] = _normalize(_normalize(_qmul(_from_rotvec(omega_dt), quat)))
        rvq = _to_rotvec(quat)
        for i in range(3):
            if not np.isfinite(pos[i]) or abs(pos[i]) > LIMIT or abs(rvq[i]) > LIMIT:
                return t, BLOWUP_POSITION, energy, tracking
        _contact(pos, qd, surf, f_ext)
        # logging and metrics
        row = offset + t
        p = 0.0
        for i in range(6):
            tau_log[row, i] = tau[i]
            qd_log[row, i] = qd[i]
            e_log[row, i] = e[i]
            xd_log[row, i] = qd[i]
            K_log[row, i] = K[i]
            F_log[row, i] = F_ff[i]
            w_log[row, i] = f_ext[i]
            p += abs(tau[i] * qd[i])
        sp_log[row, :3] = x_ref_pos
        sgn = -1.0 if x_ref_q[0] < 0.0 else 1.0
        for i in range(4):
            sp_log[row, 3 + i] = sgn * x_ref_q[i]
        pose_log[row, :3] = pos
        sgn = -1.0 if quat[0] < 0.0 else 1.0
        for i in range(4):
            pose_log[row, 3 + i] = sgn * quat[i]
        energy += p * dt
        tracking += (abs(e[0]) + abs(e[1]) + abs(e[2]) + np.sqrt(e[3] * e[3] + e[4] * e[4] + e[5] * e[5])) * dt
    return n_ticks, OK, energy, tracking
