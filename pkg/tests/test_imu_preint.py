import numpy as np
import pytest

from lidarcal.errors import EmptyWindow, NonMonotonicTime
from lidarcal.geom import exp_so3, geodesic_distance, skew
from lidarcal.imu_preint import ImuSample, preintegrate


def constant_stream(omega, accel, rate=100.0, duration=1.0):
    n = int(round(rate * duration))
    return [ImuSample(k / rate, omega, accel) for k in range(n)]


def rk4_oracle(omega_fn, accel_fn, t0, t1, steps):
    """Dense RK4 on the continuous kinematics; independent of preintegrate."""
    h = (t1 - t0) / steps
    r = np.eye(3)
    v = np.zeros(3)
    p = np.zeros(3)

    def deriv(t, r, v):
        dr = r @ skew(omega_fn(t))
        dv = r @ accel_fn(t)
        return dr, dv

    for k in range(steps):
        t = t0 + k * h
        k1r, k1v = deriv(t, r, v)
        k2r, k2v = deriv(t + h / 2, r + h / 2 * k1r, v + h / 2 * k1v)
        k3r, k3v = deriv(t + h / 2, r + h / 2 * k2r, v + h / 2 * k2v)
        k4r, k4v = deriv(t + h, r + h * k3r, v + h * k3v)
        p = p + h * v + (h**2 / 6.0) * (k1v + k2v + k3v)
        r = r + (h / 6.0) * (k1r + 2 * k2r + 2 * k3r + k4r)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        # re-orthogonalize so integration error stays in the tangent space
        u, _, vt = np.linalg.svd(r)
        r = u @ vt
    return r, v, p


class TestPreintegrate:
    def test_single_zero_sample(self):
        delta = preintegrate([ImuSample(0.0, [0, 0, 0], [0, 0, 0])], 0.0, 1.0)
        assert np.allclose(delta.d_rot, np.eye(3))
        assert np.allclose(delta.d_vel, 0.0)
        assert np.allclose(delta.d_pos, 0.0)
        assert delta.duration == pytest.approx(1.0)

    def test_constant_rotation_rate(self):
        samples = constant_stream([0, 0, 0.5], [0, 0, 0])
        delta = preintegrate(samples, 0.0, 1.0)
        assert geodesic_distance(delta.d_rot, exp_so3([0, 0, 0.5])) < 1e-6
        assert np.allclose(delta.d_vel, 0.0)
        assert np.allclose(delta.d_pos, 0.0)

    def test_constant_acceleration(self):
        samples = constant_stream([0, 0, 0], [1, 0, 0])
        delta = preintegrate(samples, 0.0, 1.0)
        assert np.allclose(delta.d_vel, [1, 0, 0], atol=1e-6)
        assert np.allclose(delta.d_pos, [0.5, 0, 0], atol=1e-2)

    def test_empty_window(self):
        samples = constant_stream([0, 0, 0.1], [0, 0, 0])
        with pytest.raises(EmptyWindow):
            preintegrate(samples, 5.0, 6.0)

    def test_non_monotonic(self):
        samples = [ImuSample(0.0, [0, 0, 0], [0, 0, 0]),
                   ImuSample(0.0, [0, 0, 0], [0, 0, 0])]
        with pytest.raises(NonMonotonicTime):
            preintegrate(samples, 0.0, 1.0)

    def test_bad_window_order(self):
        with pytest.raises(ValueError):
            preintegrate(constant_stream([0, 0, 0], [0, 0, 0]), 1.0, 0.0)


class TestAgainstRk4Oracle:
    def test_constant_rate_window(self):
        # magnitudes chosen so the zero-order-hold position error bound
        # (dt/4)*||omega x a||*T^2 stays below the 1e-4 target
        omega = np.array([0.1, -0.05, 0.15])
        accel = np.array([0.1, 0.02, -0.05])
        samples = constant_stream(omega, accel)
        delta = preintegrate(samples, 0.0, 1.0)
        r_ref, _, p_ref = rk4_oracle(lambda t: omega, lambda t: accel,
                                     0.0, 1.0, 1000)
        assert geodesic_distance(delta.d_rot, r_ref) < 1e-6
        assert np.linalg.norm(delta.d_pos - p_ref) < 1e-4

    def test_smooth_time_varying_window(self):
        def omega(t):
            return np.array([0.3 * np.sin(2 * t), 0.2 * np.cos(3 * t), 0.4 * t])

        def accel(t):
            return np.array([np.sin(t), 0.5, -0.3 * np.cos(2 * t)])

        rate = 100.0
        samples = [ImuSample(k / rate, omega(k / rate), accel(k / rate))
                   for k in range(int(rate))]
        delta = preintegrate(samples, 0.0, 1.0)
        r_ref, _, p_ref = rk4_oracle(omega, accel, 0.0, 1.0, 1000)
        # the sample-and-hold discretization error dominates here:
        # rotation ~ max|domega/dt|*dt/2 per unit time, position similar
        assert geodesic_distance(delta.d_rot, r_ref) < 5e-3
        assert np.linalg.norm(delta.d_pos - p_ref) < 5e-3


class TestConcatenation:
    def test_split_window_matches_full(self):
        omega = np.array([0.1, 0.25, -0.15])
        accel = np.array([0.3, -0.2, 0.1])
        samples = constant_stream(omega, accel, duration=2.0)
        full = preintegrate(samples, 0.0, 2.0)
        first = preintegrate(samples, 0.0, 1.0)
        second = preintegrate(samples, 1.0, 2.0)

        assert geodesic_distance(full.d_rot, first.d_rot @ second.d_rot) < 1e-9
        # position composition: p_ik = p_ij + v_ij*dt_jk + R_ij p_jk
        composed = (first.d_pos + first.d_vel * second.duration
                    + first.d_rot @ second.d_pos)
        bound = np.linalg.norm(accel) * (1.0 / 100.0) ** 2
        assert np.linalg.norm(full.d_pos - composed) < max(bound, 1e-9)
