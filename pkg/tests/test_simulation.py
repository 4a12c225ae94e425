"""Tests for the closed-loop simulator."""

import json
import math

import numpy as np
import pytest

from cineplan.coordination import EVENT_COLUMNS
from cineplan.dynamics import UavState
from cineplan.scenario import load_scenario, parse_scenario
from cineplan.simulation import TRAJECTORY_COLUMNS, RunStatus, check_safety, lag_step, run
from cineplan.solver import SolveResult, SolveStatus

from .conftest import SCENARIO_DIR


def _always_fails(nlp, options):
    return SolveResult(
        status=SolveStatus.MAX_ITER,
        z=options.initial_guess,
        kkt_residual=math.inf,
        constraint_violation=1.0,
        iterations=options.max_iterations,
        wall_time=0.0,
    )


class TestLagStep:
    def test_half_life(self):
        tau = 0.3
        out = lag_step(UavState([0, 0, 0], [2, 0, 0]), np.zeros(3), tau * math.log(2.0), tau)
        np.testing.assert_allclose(out.v, [1.0, 0.0, 0.0])
        np.testing.assert_allclose(out.p, [tau, 0.0, 0.0])

    def test_steady_command(self):
        out = lag_step(UavState([1, 2, 3], [1, 0, 0]), np.array([1.0, 0.0, 0.0]), 0.1, 0.3)
        np.testing.assert_allclose(out.v, [1.0, 0.0, 0.0])
        np.testing.assert_allclose(out.p, [1.1, 2.0, 3.0])


class TestCheckSafety:
    def test_collision(self, hover_data):
        second = dict(hover_data["uavs"][0], id="uav2", priority=2)
        hover_data["uavs"].append(second)
        scenario = parse_scenario(hover_data)
        close = {"uav1": UavState([0, 0, 3], [0, 0, 0]), "uav2": UavState([0, 0.5, 3], [0, 0, 0])}
        event = check_safety(scenario, close, 1.0)
        assert event.kind == "collision"
        assert event.uav_ids == ("uav1", "uav2")
        assert event.distance == pytest.approx(0.5)
        far = {"uav1": UavState([0, 0, 3], [0, 0, 0]), "uav2": UavState([0, 3, 3], [0, 0, 0])}
        assert check_safety(scenario, far, 1.0) is None

    def test_zone_without_margin(self, hover_data):
        hover_data["nofly"] = [
            {"type": "circle", "center": [0.0, 0.0], "radius": 1.0, "margin": 0.5}
        ]
        scenario = parse_scenario(hover_data)
        assert check_safety(scenario, {"uav1": UavState([1.2, 0, 3], [0, 0, 0])}, 0.0) is None
        event = check_safety(scenario, {"uav1": UavState([0.8, 0, 3], [0, 0, 0])}, 0.0)
        assert event.kind == "nofly"
        assert event.distance == pytest.approx(0.2)


class TestRun:
    def test_static_chase_holds_pose(self):
        result = run(load_scenario(SCENARIO_DIR / "chase_static.json"), deterministic=True)
        assert result.status is RunStatus.OK
        assert result.exit_code == 0
        traj = result.trajectories
        assert len(traj) == 101
        offset = traj[["px", "py", "pz"]].to_numpy() - [-2.0, 0.0, 3.5]
        assert np.max(np.linalg.norm(offset, axis=1)) < 0.2

    def test_output_layout(self, lateral_data):
        result = run(parse_scenario(lateral_data), deterministic=True)
        assert list(result.trajectories.columns) == TRAJECTORY_COLUMNS
        assert list(result.events.columns) == EVENT_COLUMNS
        assert len(result.trajectories) == 21
        # Planner at 2 Hz over 2 s.
        assert len(result.events) == 5
        assert (result.events["wall_time"] == 0.0).all()

    def test_deterministic_runs_are_identical(self, lateral_data, tmp_path):
        scenario = parse_scenario(lateral_data)
        first = run(scenario, deterministic=True).write(tmp_path / "a")
        second = run(scenario, deterministic=True).write(tmp_path / "b")
        for name in ("trajectories.csv", "events.csv", "metrics.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_write(self, hover_data, tmp_path):
        out = run(parse_scenario(hover_data), deterministic=True).write(tmp_path / "run")
        summary = json.loads((out / "metrics.json").read_text())
        assert summary["status"] == "ok"
        assert summary["safety"] is None
        assert "uav1" in summary["uavs"]

    def test_zone_at_start_halts(self, hover_data):
        hover_data["nofly"] = [{"type": "circle", "center": [-2.0, 0.0], "radius": 1.0}]
        result = run(parse_scenario(hover_data))
        assert result.status is RunStatus.SAFETY_VIOLATION
        assert result.exit_code == 2
        assert result.safety.kind == "nofly"
        assert result.halted_at == 0.0
        assert len(result.trajectories) == 1

    def test_solver_failure_cascade(self, hover_data, monkeypatch):
        monkeypatch.setattr("cineplan.coordination.solve", _always_fails)
        hover_data["uavs"][0]["planner_rate"] = 5.0
        result = run(parse_scenario(hover_data), deterministic=True)
        assert result.status is RunStatus.SOLVER_FAILURE
        assert result.exit_code == 3
        assert result.halted_at == pytest.approx(0.4)
        assert list(result.events["fallback"]) == ["hover"] * 3
        # Without any plan the UAV hovers where it started.
        final = result.trajectories[["px", "py", "pz"]].to_numpy()[-1]
        np.testing.assert_allclose(final, [-2.0, 0.0, 3.5])
