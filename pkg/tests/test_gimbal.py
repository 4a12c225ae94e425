"""Tests for camera gimbal geometry."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cineplan.dynamics import wrap_angle
from cineplan.exceptions import GimbalGeometryError, YawUndefinedError
from cineplan.gimbal import (
    camera_rotation,
    gimbal_angles,
    gimbal_rates,
    guarded_pitch,
    guarded_pitch_rate,
    guarded_yaw_cosine,
    guarded_yaw_rate,
    relative_gimbal_angles,
    vee,
    world_gimbal_angles,
)
from cineplan.validation import central_difference, relative_error

coord = st.floats(min_value=-5.0, max_value=5.0)
height = st.floats(min_value=0.5, max_value=8.0)


class TestWorldAngles:
    def test_camera_behind_target(self):
        phi, theta, psi = world_gimbal_angles([-3.0, 0.0, 3.0])
        assert phi == 0.0
        assert theta == pytest.approx(-math.pi / 4)
        assert psi == pytest.approx(0.0)

    def test_camera_to_the_right(self):
        _, _, psi = world_gimbal_angles([0.0, -4.0, 3.0])
        assert psi == pytest.approx(math.pi / 2)

    def test_below_target_raises(self):
        with pytest.raises(GimbalGeometryError):
            world_gimbal_angles([1.0, 0.0, -1.0])

    def test_directly_above_raises(self):
        with pytest.raises(GimbalGeometryError):
            world_gimbal_angles([0.0, 0.0, 5.0])


class TestRelativeAngles:
    def test_relative_yaw_subtracts_heading(self):
        theta, rel_psi = relative_gimbal_angles([-3.0, 0.0, 3.0], [0.0, 1.0, 0.0])
        assert theta == pytest.approx(-math.pi / 4)
        assert rel_psi == pytest.approx(-math.pi / 2)

    def test_record(self):
        angles = gimbal_angles([-3.0, 0.0, 3.0], [1.0, 0.0, 0.0])
        assert angles.rel_psi == pytest.approx(0.0)
        assert angles.rel_theta == angles.theta_c

    def test_hovering_uav_has_no_relative_yaw(self):
        with pytest.raises(YawUndefinedError):
            relative_gimbal_angles([-3.0, 0.0, 3.0], [0.0, 0.0, 0.0])


class TestCameraRotation:
    @settings(max_examples=50)
    @given(coord, coord, height)
    def test_optical_axis_is_q(self, qx, qy, qz):
        if math.hypot(qx, qy) < 0.1:
            return
        q = np.array([qx, qy, qz])
        r = camera_rotation(q)
        np.testing.assert_allclose(r[:, 2], q / np.linalg.norm(q), atol=1e-12)
        np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0)

    def test_vee(self):
        w = np.array([0.1, -0.2, 0.3])
        skew = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
        np.testing.assert_allclose(vee(skew), w)


def _angles(q, v):
    h = math.hypot(q[0], q[1])
    return np.array([math.atan2(-h, q[2]), math.atan2(-q[1], -q[0]) - math.atan2(v[1], v[0])])


class TestGimbalRates:
    @settings(max_examples=100)
    @given(
        st.tuples(coord, coord, height),
        st.tuples(coord, coord, coord),
        st.tuples(coord, coord, st.just(0.0)),
        st.tuples(coord, coord, st.just(0.0)),
    )
    def test_matches_finite_differences(self, q, r, v, a):
        q, r, v, a = map(np.asarray, (q, r, v, a))
        if math.hypot(q[0], q[1]) < 0.5 or math.hypot(v[0], v[1]) < 0.5:
            return
        eps = 1e-6
        plus = _angles(q + eps * r, v + eps * a)
        minus = _angles(q - eps * r, v - eps * a)
        numeric = wrap_angle(plus - minus) / (2 * eps)
        analytic = np.array(gimbal_rates(q, r, v, a))
        assert relative_error(analytic, numeric) <= 1e-5

    def test_static_geometry_has_zero_rates(self):
        rates = gimbal_rates([-3.0, 1.0, 3.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0])
        assert rates == pytest.approx((0.0, 0.0))


class TestGuardedForms:
    rng = np.random.default_rng(4)
    q = rng.uniform([-5, -5, 0.5], [5, 5, 6], (1, 3))
    r = rng.uniform(-2, 2, (1, 3))
    v = rng.uniform(-2, 2, (1, 3))
    a = rng.uniform(-2, 2, (1, 3))

    def test_pitch_close_to_exact_away_from_guard(self):
        q = np.array([[-6.0, 0.0, 3.0]])
        theta, _ = guarded_pitch(q)
        assert theta[0] == pytest.approx(world_gimbal_angles(q[0])[1], abs=1e-3)

    def test_pitch_gradient(self):
        _, grad = guarded_pitch(self.q)
        numeric = central_difference(lambda x: guarded_pitch(x.reshape(1, 3))[0][0], self.q[0])
        assert relative_error(grad[0], numeric) <= 1e-6

    def test_pitch_rate_gradients(self):
        _, dq, dr = guarded_pitch_rate(self.q, self.r)
        num_q = central_difference(
            lambda x: guarded_pitch_rate(x.reshape(1, 3), self.r)[0][0], self.q[0]
        )
        num_r = central_difference(
            lambda x: guarded_pitch_rate(self.q, x.reshape(1, 3))[0][0], self.r[0]
        )
        assert relative_error(dq[0], num_q) <= 1e-6
        assert relative_error(dr[0], num_r) <= 1e-6

    def test_yaw_rate_gradients(self):
        _, dq, dr, dv, da = guarded_yaw_rate(self.q, self.r, self.v, self.a)
        args = [self.q, self.r, self.v, self.a]
        for i, analytic in enumerate((dq, dr, dv, da)):

            def func(x, i=i):
                local = list(args)
                local[i] = x.reshape(1, 3)
                return guarded_yaw_rate(*local)[0][0]

            assert relative_error(analytic[0], central_difference(func, args[i][0])) <= 1e-6

    def test_yaw_cosine_gradients(self):
        _, dq, dv = guarded_yaw_cosine(self.q, self.v, 0.4)
        num_q = central_difference(
            lambda x: guarded_yaw_cosine(x.reshape(1, 3), self.v, 0.4)[0][0], self.q[0]
        )
        num_v = central_difference(
            lambda x: guarded_yaw_cosine(self.q, x.reshape(1, 3), 0.4)[0][0], self.v[0]
        )
        assert relative_error(dq[0], num_q) <= 1e-6
        assert relative_error(dv[0], num_v) <= 1e-6

    def test_yaw_cosine_tracks_relative_yaw(self):
        q = np.array([[-8.0, 0.0, 3.0]])
        v = np.array([[3.0, 4.0, 0.0]])
        value, _, _ = guarded_yaw_cosine(q, v, 0.0)
        _, rel_psi = relative_gimbal_angles(q[0], v[0])
        assert value[0] == pytest.approx(math.cos(rel_psi), abs=1e-3)
