"""Tests for plan exchange and priority planning rounds."""

import math

import numpy as np
import pytest

from cineplan.config import PlannerBounds, PlannerWeights
from cineplan.coordination import (
    EVENT_COLUMNS,
    AgentConfig,
    PlanBus,
    PlannedTrajectory,
    UavAgent,
    WorldSnapshot,
    build_problem,
    events_frame,
    latest_plan,
    planning_round,
)
from cineplan.dynamics import UavState, rollout
from cineplan.shots import ShotSpec, ShotType, TargetEstimate
from cineplan.solver import SolveResult, SolveStatus

HOVER_BOUNDS = PlannerBounds(theta=(-1.5708, -0.2))


def _straight(uav_id="uav1", stamp=0.0, steps=10, dt=0.1):
    return PlannedTrajectory.from_controls(
        uav_id, stamp, dt, UavState([0, 0, 3], [1, 0, 0]), np.zeros((steps, 3))
    )


def _agent(uav_id, priority, kind, distance=2.0):
    shot = ShotSpec(kind, 10.0, 3.5, distance=distance)
    config = AgentConfig(uav_id, priority, [shot], 10, 1.0, PlannerWeights(), HOVER_BOUNDS)
    return UavAgent(config)


def _snapshot(t=0.0):
    return WorldSnapshot(
        time=t,
        dt=0.1,
        states={
            "chase": UavState([-2.0, 0.0, 3.5], [0, 0, 0]),
            "lead": UavState([2.0, 0.0, 3.5], [0, 0, 0]),
        },
        target=TargetEstimate([0, 0, 0], [0, 0, 0]),
    )


def _failed_solve(nlp, options):
    return SolveResult(
        status=SolveStatus.INFEASIBLE,
        z=options.initial_guess,
        kkt_residual=math.inf,
        constraint_violation=1.0,
        iterations=1,
        wall_time=0.0,
    )


class TestPlannedTrajectory:
    def test_states_follow_controls(self):
        controls = np.tile([0.5, 0.0, 0.0], (5, 1))
        x0 = UavState([0, 0, 3], [1, 0, 0])
        plan = PlannedTrajectory.from_controls("uav1", 2.0, 0.1, x0, controls)
        np.testing.assert_allclose(plan.states, rollout(x0, controls, 0.1))
        assert plan.stamp_end == pytest.approx(2.5)
        np.testing.assert_allclose(plan.times, 2.0 + 0.1 * np.arange(6))

    def test_positions_interpolate_and_extrapolate(self):
        plan = _straight(stamp=1.0)
        out = plan.positions_at([1.05, 3.0, 0.5])
        np.testing.assert_allclose(out, [[0.05, 0, 3], [2.0, 0, 3], [-0.5, 0, 3]], atol=1e-12)

    def test_control_at(self):
        controls = np.arange(15, dtype=float).reshape(5, 3)
        start = UavState([0, 0, 3], [0, 0, 0])
        plan = PlannedTrajectory.from_controls("uav1", 0.0, 0.1, start, controls)
        np.testing.assert_allclose(plan.control_at(0.2), controls[2])
        np.testing.assert_allclose(plan.control_at(0.6), np.zeros(3))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            PlannedTrajectory("uav1", 0.0, 0.1, np.zeros((4, 6)), np.zeros((4, 3)))


class TestPlanBus:
    def test_delivery_delay(self):
        bus = PlanBus(delay=0.5)
        bus.publish(_straight(), 0.0)
        assert latest_plan(bus, "uav1", 0.4) is None
        assert latest_plan(bus, "uav1", 0.5) is not None

    def test_latest_delivered_wins(self):
        bus = PlanBus(delay=0.5)
        first, second = _straight(stamp=0.0), _straight(stamp=1.0)
        bus.publish(first, 0.0)
        bus.publish(second, 1.0)
        assert bus.latest_plan("uav1", 1.2) is first
        assert bus.latest_plan("uav1", 1.5) is second
        assert bus.latest_plan("uav2", 5.0) is None

    def test_keeps_only_newest_delivered(self):
        bus = PlanBus(delay=0.5)
        for stamp in (0.0, 1.0, 2.0):
            bus.publish(_straight(stamp=stamp), stamp)
        assert bus.latest_plan("uav1", 2.2).stamp_start == 1.0
        assert len(bus.messages) == 2
        assert [m.trajectory.stamp_start for m in bus.in_flight] == [2.0]
        assert bus.latest_plan("uav1", 2.5).stamp_start == 2.0
        assert bus.in_flight == []

    def test_negative_delay(self):
        with pytest.raises(ValueError):
            PlanBus(delay=-0.1)


class TestPlanningRound:
    def test_priority_order_and_neighbors(self):
        chase, lead = _agent("chase", 1, ShotType.CHASE), _agent("lead", 2, ShotType.LEAD)
        bus = PlanBus()
        records = planning_round([lead, chase], _snapshot(), bus)
        assert [r.uav_id for r in records] == ["chase", "lead"]
        assert records[0].neighbors == []
        assert records[1].neighbors == ["chase"]
        assert all(r.accepted for r in records)
        assert bus.latest_plan("lead", 0.0) is lead.plan

    def test_leader_plan_independent_of_followers(self):
        alone = planning_round([_agent("chase", 1, ShotType.CHASE)], _snapshot(), PlanBus())
        team = planning_round(
            [_agent("chase", 1, ShotType.CHASE), _agent("lead", 2, ShotType.LEAD)],
            _snapshot(),
            PlanBus(),
        )
        assert np.array_equal(alone[0].trajectory.states, team[0].trajectory.states)
        assert np.array_equal(alone[0].trajectory.controls, team[0].trajectory.controls)

    def test_due_filter(self):
        chase, lead = _agent("chase", 1, ShotType.CHASE), _agent("lead", 2, ShotType.LEAD)
        records = planning_round([chase, lead], _snapshot(), PlanBus(), due=["lead"])
        assert [r.uav_id for r in records] == ["lead"]
        assert records[0].neighbors == []

    def test_hover_equilibrium_plan(self):
        chase = _agent("chase", 1, ShotType.CHASE)
        record = planning_round([chase], _snapshot(), PlanBus())[0]
        assert record.result.converged
        np.testing.assert_allclose(
            record.trajectory.states[:, :3], np.tile([-2.0, 0.0, 3.5], (11, 1)), atol=1e-6
        )

    def test_staleness_recorded(self):
        chase, lead = _agent("chase", 1, ShotType.CHASE), _agent("lead", 2, ShotType.LEAD)
        bus = PlanBus()
        planning_round([chase, lead], _snapshot(0.0), bus)
        records = planning_round([chase, lead], _snapshot(1.0), bus, due=["lead"])
        assert records[0].staleness == {"chase": pytest.approx(1.0)}

    def test_rejected_solve_falls_back(self, monkeypatch):
        monkeypatch.setattr("cineplan.coordination.solve", _failed_solve)
        chase = _agent("chase", 1, ShotType.CHASE)
        bus = PlanBus()
        first = planning_round([chase], _snapshot(), bus)[0]
        assert not first.accepted
        assert first.fallback == "hover"
        assert chase.consecutive_failures == 1
        assert bus.messages == []

        chase.plan = _straight("chase")
        second = planning_round([chase], _snapshot(1.0), bus)[0]
        assert second.fallback == "keep_plan"
        assert chase.consecutive_failures == 2
        assert chase.fallbacks == 2

    def test_timeout_restarts_from_measured_state(self, monkeypatch):
        guesses = []

        def timed_out(nlp, options):
            guesses.append(np.array(nlp.controls(options.initial_guess)))
            result = _failed_solve(nlp, options)
            result.status = SolveStatus.MAX_TIME
            return result

        monkeypatch.setattr("cineplan.coordination.solve", timed_out)
        chase = _agent("chase", 1, ShotType.CHASE)
        start = UavState([-2.0, 0.0, 3.5], [0, 0, 0])
        chase.plan = PlannedTrajectory.from_controls(
            "chase", 0.0, 0.1, start, np.full((10, 3), 0.5)
        )
        first = planning_round([chase], _snapshot(), PlanBus())[0]
        assert first.fallback == "keep_plan"
        assert chase.timed_out
        planning_round([chase], _snapshot(), PlanBus())
        # Warm start from the kept plan, then the hover guess after the timeout.
        np.testing.assert_allclose(guesses[0], 0.5)
        np.testing.assert_allclose(guesses[1], 0.0)

    def test_accepted_timeout_keeps_warm_start(self, monkeypatch):
        def timed_out(nlp, options):
            result = _failed_solve(nlp, options)
            result.status = SolveStatus.MAX_TIME
            result.constraint_violation = 5e-3
            return result

        monkeypatch.setattr("cineplan.coordination.solve", timed_out)
        chase = _agent("chase", 1, ShotType.CHASE)
        assert planning_round([chase], _snapshot(), PlanBus())[0].accepted
        assert not chase.timed_out

    def test_small_violation_still_accepted(self, monkeypatch):
        def almost(nlp, options):
            result = _failed_solve(nlp, options)
            result.constraint_violation = 5e-3
            return result

        monkeypatch.setattr("cineplan.coordination.solve", almost)
        chase = _agent("chase", 1, ShotType.CHASE)
        record = planning_round([chase], _snapshot(), PlanBus())[0]
        assert record.accepted
        assert chase.consecutive_failures == 0


class TestBuildProblem:
    def test_neighbor_positions_on_planner_grid(self):
        lead = _agent("lead", 2, ShotType.LEAD)
        neighbor = _straight("chase", stamp=0.0, steps=20)
        problem = build_problem(lead, _snapshot(0.5), [neighbor])
        positions = problem.neighbor_plans[0].positions
        assert positions.shape == (11, 3)
        np.testing.assert_allclose(positions[0], [0.5, 0.0, 3.0], atol=1e-12)

    def test_target_obstacle_optional(self):
        chase = _agent("chase", 1, ShotType.CHASE)
        snapshot = _snapshot()
        assert build_problem(chase, snapshot, []).dynamic_obstacles == []
        snapshot.target_obstacle_radius = 1.0
        assert len(build_problem(chase, snapshot, []).dynamic_obstacles) == 1


class TestEventsFrame:
    def test_columns_and_zero_wall_time(self):
        chase, lead = _agent("chase", 1, ShotType.CHASE), _agent("lead", 2, ShotType.LEAD)
        records = planning_round([chase, lead], _snapshot(), PlanBus())
        frame = events_frame(records, zero_wall_time=True)
        assert list(frame.columns) == EVENT_COLUMNS
        assert list(frame["uav_id"]) == ["chase", "lead"]
        assert (frame["wall_time"] == 0.0).all()
        assert list(frame["neighbors"]) == ["", "chase"]
