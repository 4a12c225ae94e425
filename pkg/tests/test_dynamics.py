"""Tests for the double-integrator model and attitude recovery."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cineplan.dynamics import (
    AttitudeTracker,
    ControlInput,
    UavState,
    acceleration_from_attitude,
    euler_zyx_to_matrix,
    recover_attitude,
    rollout,
    step_rk4,
    wrap_angle,
)
from cineplan.exceptions import NonFiniteInputError, SingularityError, YawUndefinedError

component = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False)
vector = st.tuples(component, component, component)


class TestStepRk4:
    def test_matches_closed_form(self):
        x = UavState(p=[1.0, 2.0, 3.0], v=[0.5, -0.5, 0.0])
        u = ControlInput([0.2, 0.1, -0.3])
        nxt = step_rk4(x, u, 0.1)
        np.testing.assert_allclose(nxt.p, x.p + 0.1 * x.v + 0.005 * u.a, atol=1e-12)
        np.testing.assert_allclose(nxt.v, x.v + 0.1 * u.a, atol=1e-12)

    @settings(max_examples=50)
    @given(vector, vector, vector, st.floats(min_value=0.01, max_value=1.0))
    def test_closed_form_property(self, p, v, a, dt):
        x = UavState(p, v)
        nxt = step_rk4(x, ControlInput(a), dt)
        a = np.asarray(a)
        assert np.max(np.abs(nxt.p - (x.p + x.v * dt + 0.5 * a * dt * dt))) <= 1e-12
        assert np.max(np.abs(nxt.v - (x.v + a * dt))) <= 1e-12

    def test_rejects_non_positive_dt(self):
        x = UavState([0, 0, 0], [0, 0, 0])
        with pytest.raises(ValueError):
            step_rk4(x, ControlInput([0, 0, 0]), 0.0)

    def test_rejects_non_finite_state(self):
        with pytest.raises(NonFiniteInputError):
            UavState([0.0, float("nan"), 0.0], [0, 0, 0])

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            UavState([0.0, 0.0], [0, 0, 0])


class TestRollout:
    def test_shape_and_first_row(self):
        x0 = UavState([0, 0, 1], [1, 0, 0])
        states = rollout(x0, np.zeros((5, 3)), 0.1)
        assert states.shape == (6, 6)
        np.testing.assert_allclose(states[0], x0.as_vector())
        np.testing.assert_allclose(states[-1, :3], [0.5, 0.0, 1.0], atol=1e-12)

    def test_consistent_with_single_steps(self):
        x0 = UavState([0, 0, 1], [1, 0, 0])
        controls = np.array([[0.1, 0.2, 0.0], [0.0, -0.1, 0.3], [1.0, 0.0, 0.0]])
        states = rollout(x0, controls, 0.2)
        x = x0
        for k, a in enumerate(controls):
            x = step_rk4(x, ControlInput(a), 0.2)
            np.testing.assert_allclose(states[k + 1], x.as_vector(), atol=1e-12)


class TestWrapAngle:
    def test_range_endpoints(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)
        assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
        assert wrap_angle(0.5) == pytest.approx(0.5)

    def test_array(self):
        out = wrap_angle(np.array([2 * math.pi + 0.1, -2 * math.pi - 0.1]))
        np.testing.assert_allclose(out, [0.1, -0.1], atol=1e-12)


class TestRecoverAttitude:
    def test_level_cruise(self):
        att = recover_attitude([1.0, 0.0, 0.0], [0.0, 0.0, 0.0])
        assert att.thrust == pytest.approx(9.81)
        np.testing.assert_allclose(att.euler, [0.0, 0.0, 0.0], atol=1e-12)

    def test_yaw_follows_velocity(self):
        att = recover_attitude([0.0, 2.0, 0.0], [0.0, 0.0, 0.0])
        assert att.yaw == pytest.approx(math.pi / 2)

    def test_forward_acceleration_tilts_thrust(self):
        att = recover_attitude([1.0, 0.0, 0.0], [1.0, 0.0, 0.0])
        assert att.pitch == pytest.approx(math.atan2(1.0, 9.81))
        assert att.roll == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=100)
    @given(
        st.floats(min_value=0.0, max_value=2 * math.pi),
        st.floats(min_value=0.01, max_value=5.0),
        st.tuples(
            st.floats(min_value=-3.0, max_value=3.0),
            st.floats(min_value=-3.0, max_value=3.0),
            st.floats(min_value=-3.0, max_value=3.0),
        ),
    )
    def test_round_trip(self, heading, speed, a):
        v = [speed * math.cos(heading), speed * math.sin(heading), 0.0]
        att = recover_attitude(v, a)
        assert np.max(np.abs(acceleration_from_attitude(att) - np.asarray(a))) <= 1e-9

    def test_free_fall_is_singular(self):
        with pytest.raises(SingularityError):
            recover_attitude([1.0, 0.0, 0.0], [0.0, 0.0, -9.81])

    def test_hover_yaw_undefined(self):
        with pytest.raises(YawUndefinedError):
            recover_attitude([0.0, 0.0, 0.5], [0.0, 0.0, 0.0])


class TestEulerMatrix:
    def test_orthonormal(self):
        r = euler_zyx_to_matrix([0.3, -0.2, 1.1])
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0)

    def test_pure_yaw(self):
        r = euler_zyx_to_matrix([0.0, 0.0, math.pi / 2])
        np.testing.assert_allclose(r @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-12)


class TestAttitudeTracker:
    def test_holds_last_yaw_while_hovering(self):
        tracker = AttitudeTracker()
        first = tracker.update([1.0, 1.0, 0.0], [0.0, 0.0, 0.0])
        assert first.yaw == pytest.approx(math.pi / 4)
        assert not tracker.yaw_held

        held = tracker.update([0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
        assert tracker.yaw_held
        assert held.yaw == pytest.approx(math.pi / 4)
        assert held.thrust == pytest.approx(9.81)

    def test_free_fall_returns_none(self):
        tracker = AttitudeTracker()
        assert tracker.update([1.0, 0.0, 0.0], [0.0, 0.0, -9.81]) is None
