"""Tests for trajectory metrics."""

import json
import math

import numpy as np
import pandas as pd
import pytest

from cineplan.exceptions import MetricsUndefinedError
from cineplan.metrics import MetricsReport, TrajectoryMetrics, compute_metrics
from cineplan.metrics.effort import (
    AVERAGE_ACCELERATION,
    AVERAGE_ACTUAL_ACCELERATION,
    TRAVELED_DISTANCE,
)
from cineplan.metrics.safety import MIN_SEPARATION, MIN_VISIBILITY_MARGIN, MIN_ZONE_DISTANCE
from cineplan.metrics.smoothness import AVERAGE_YAW_JERK, third_derivative
from cineplan.scenario import parse_scenario
from cineplan.simulation import TRAJECTORY_COLUMNS
from cineplan.zones import CircleZone

DT = 0.1


def _frame(uav_id, positions, **columns):
    positions = np.asarray(positions, dtype=float)
    n = len(positions)
    data = {
        "time": DT * np.arange(n),
        "uav_id": [uav_id] * n,
        "px": positions[:, 0],
        "py": positions[:, 1],
        "pz": positions[:, 2],
        "target_px": np.zeros(n),
        "target_py": np.zeros(n),
        "target_pz": np.zeros(n),
    }
    data.update(columns)
    return pd.DataFrame(data)


def _full_frame(uav_id, position, samples):
    """Every output column, UAV holding ``position`` over a static target."""
    frame = pd.DataFrame(0.0, index=range(samples), columns=TRAJECTORY_COLUMNS)
    frame["time"] = DT * np.arange(samples)
    frame["uav_id"] = uav_id
    frame[["px", "py", "pz"]] = position
    frame["theta_c"] = -0.5
    frame["psi_c"] = 0.0
    return frame


class TestThirdDerivative:
    def test_cubic_has_unit_jerk(self):
        t = DT * np.arange(30)
        jerk = third_derivative(t**3 / 6.0, DT)
        np.testing.assert_allclose(jerk, np.ones(len(t) - 6), atol=1e-6)

    def test_too_few_samples(self):
        with pytest.raises(MetricsUndefinedError):
            third_derivative(np.zeros(6), DT)

    def test_wrap_keeps_angles_continuous(self):
        t = DT * np.arange(20)
        psi = np.array([math.remainder(np.pi - 0.3 + 0.1 * k, 2 * np.pi) for k in t / DT])
        assert np.max(np.abs(third_derivative(psi, DT, wrap=True))) < 1e-6
        assert np.max(np.abs(third_derivative(psi, DT))) > 100.0

    def test_yaw_jerk_uses_wrapped_differences(self):
        psi = [math.remainder(np.pi - 0.3 + 0.1 * k, 2 * np.pi) for k in range(20)]
        df = _frame("uav1", np.zeros((20, 3)), psi_c=psi)
        assert AVERAGE_YAW_JERK(df, DT) == pytest.approx(0.0, abs=1e-6)


class TestEffort:
    def test_average_acceleration(self):
        df = _frame("uav1", np.zeros((4, 3)), ux=[3.0] * 4, uy=[4.0] * 4, uz=[0.0] * 4)
        assert AVERAGE_ACCELERATION(df) == pytest.approx(5.0)

    def test_actual_acceleration_from_velocity(self):
        vx = DT * np.arange(10) * 2.0
        df = _frame("uav1", np.zeros((10, 3)), vx=vx, vy=np.zeros(10), vz=np.zeros(10))
        assert AVERAGE_ACTUAL_ACCELERATION(df, DT) == pytest.approx(2.0)

    def test_traveled_distance(self):
        df = _frame("uav1", [[0, 0, 0], [3, 4, 0], [3, 4, 2]])
        assert TRAVELED_DISTANCE(df) == pytest.approx(7.0)

    def test_missing_column(self):
        df = _frame("uav1", np.zeros((3, 3)))
        with pytest.raises(ValueError, match="Column 'ux' not found in DataFrame"):
            AVERAGE_ACCELERATION(df)


class TestSafety:
    def test_parallel_lines(self):
        line = np.column_stack([np.arange(10.0), np.zeros(10), np.full(10, 3.0)])
        df = pd.concat([_frame("a", line), _frame("b", line + [0.0, 3.0, 0.0])])
        assert MIN_SEPARATION(df, "a") == pytest.approx(3.0)

    def test_horizontal_ignores_altitude(self):
        low = np.tile([1.0, 1.0, 2.0], (5, 1))
        df = pd.concat([_frame("a", low), _frame("b", low + [0.0, 0.0, 4.0])])
        assert MIN_SEPARATION(df, "a") == pytest.approx(4.0)
        assert MIN_SEPARATION(df, "a", horizontal=True) == pytest.approx(0.0)

    def test_single_uav(self):
        assert math.isnan(MIN_SEPARATION(_frame("a", np.zeros((3, 3))), "a"))

    def test_zone_distance(self):
        zone = CircleZone([0.0, 0.0], 1.0)
        df = _frame("a", [[4.0, 0.0, 3.0], [3.0, 0.0, 3.0], [0.5, 0.0, 3.0]])
        assert MIN_ZONE_DISTANCE(df.iloc[:2], zone) == pytest.approx(2.0)
        assert MIN_ZONE_DISTANCE(df, zone) == 0.0

    def test_other_uav_in_view(self):
        viewer = np.tile([-6.0, 0.0, 3.0], (5, 1))
        between = np.tile([-3.0, 0.0, 1.5], (5, 1))
        aside = np.tile([-6.0, 6.0, 3.0], (5, 1))
        df = pd.concat([_frame("v", viewer), _frame("b", between), _frame("c", aside)])
        assert MIN_VISIBILITY_MARGIN(df, "v", "b", np.pi / 6) < 0.0
        assert MIN_VISIBILITY_MARGIN(df, "v", "c", np.pi / 6) > 0.0


class TestTrajectoryMetrics:
    def test_requires_dataframe(self):
        with pytest.raises(TypeError):
            TrajectoryMetrics([1, 2, 3], DT)

    def test_unknown_metric(self):
        metrics = TrajectoryMetrics(_full_frame("uav1", [0, 0, 3], 10), DT)
        with pytest.raises(ValueError, match="Unknown metric"):
            metrics.compute_metric("AVERAGE_SNAP", "uav1")

    def test_missing_parameter(self):
        metrics = TrajectoryMetrics(_full_frame("uav1", [0, 0, 3], 10), DT)
        with pytest.raises(ValueError, match="zone"):
            metrics.compute_metric("MIN_ZONE_DISTANCE", "uav1")

    def test_unknown_uav(self):
        metrics = TrajectoryMetrics(_full_frame("uav1", [0, 0, 3], 10), DT)
        with pytest.raises(ValueError):
            metrics.compute_metric("TRAVELED_DISTANCE", "uav9")

    def test_constant_geometry_has_zero_jerk(self):
        metrics = TrajectoryMetrics(_full_frame("uav1", [-2, 0, 3.5], 20), DT)
        assert metrics.compute_metric("AVERAGE_PITCH_JERK", "uav1") == 0.0
        assert metrics.compute_metric("AVERAGE_YAW_JERK", "uav1") == 0.0

    def test_short_run_lenient(self):
        metrics = TrajectoryMetrics(_full_frame("uav1", [-2, 0, 3.5], 5), DT)
        with pytest.raises(MetricsUndefinedError):
            metrics.compute_all_metrics("uav1")
        values = metrics.compute_all_metrics("uav1", strict=False)
        assert math.isnan(values["avg_pitch_jerk"])


class TestComputeMetrics:
    def test_report(self, hover_data):
        hover_data["nofly"] = [{"type": "circle", "center": [5.0, 0.0], "radius": 1.0}]
        scenario = parse_scenario(hover_data)
        report = compute_metrics(_full_frame("uav1", [-2.0, 0.0, 3.5], 21), scenario)
        values = report.uavs["uav1"]
        assert values["avg_acceleration"] == 0.0
        assert values["traveled_distance"] == 0.0
        assert values["min_distance_zone0"] == pytest.approx(6.0)
        assert math.isnan(report.min_pairwise_distance)

    def test_solve_statistics_from_events(self, hover_data):
        scenario = parse_scenario(hover_data)
        events = pd.DataFrame(
            {"uav_id": ["uav1", "uav1"], "wall_time": [0.1, 0.3], "accepted": [True, False]}
        )
        report = compute_metrics(_full_frame("uav1", [-2.0, 0.0, 3.5], 21), scenario, events)
        values = report.uavs["uav1"]
        assert values["avg_solve_time"] == pytest.approx(0.2)
        assert values["max_solve_time"] == pytest.approx(0.3)
        assert values["solves"] == 2
        assert values["fallbacks"] == 1


class TestMetricsReport:
    def test_nan_becomes_null(self):
        report = MetricsReport(uavs={"uav1": {"avg_yaw_jerk": float("nan"), "solves": np.int64(3)}})
        data = report.to_dict()
        assert data["uavs"]["uav1"] == {"avg_yaw_jerk": None, "solves": 3}
        assert data["min_pairwise_distance"] is None
        assert json.loads(report.to_json()) == data

    def test_flat_keys(self):
        report = MetricsReport(
            uavs={"uav2": {"avg_pitch_jerk": 1.0}, "uav1": {"avg_pitch_jerk": 2.0}},
            pairs={"uav1->uav2": 0.5},
            min_pairwise_distance=4.0,
        )
        row = report.flat()
        assert row["uav1.avg_pitch_jerk"] == 2.0
        assert row["visibility_margin.uav1->uav2"] == 0.5
        assert list(row)[:2] == ["min_pairwise_distance", "min_horizontal_distance"]
