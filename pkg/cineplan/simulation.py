"""
Deterministic fixed-step simulation of a filming team.

Each step of ``dt``:

1. the target advances and is measured (optionally with Gaussian noise);
2. UAVs whose planning period divides the step run a priority round;
3. followers turn the current plans into velocity commands;
4. gimbal controllers update at their own rate;
5. the executed state is recorded and audited for safety;
6. each UAV velocity responds to its command through a first-order lag.

All randomness comes from the scenario seed, so identical inputs give
identical outputs.
"""

import json
import logging
import math
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from cineplan.config import SIMULATION_DEFAULTS, SOLVER_DEFAULTS
from cineplan.coordination import PlanBus, WorldSnapshot, events_frame, planning_round
from cineplan.dynamics import AttitudeTracker, UavState, wrap_angle
from cineplan.exceptions import GimbalGeometryError
from cineplan.execution import (
    FollowerConfig,
    GimbalController,
    GimbalControllerConfig,
    TrajectoryFollower,
)
from cineplan.gimbal import world_gimbal_angles
from cineplan.metrics import MetricsReport, compute_metrics
from cineplan.scenario import Scenario, build_agents
from cineplan.shots import TargetEstimate

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = [
    "time",
    "uav_id",
    "px",
    "py",
    "pz",
    "vx",
    "vy",
    "vz",
    "ux",
    "uy",
    "uz",
    "vcx",
    "vcy",
    "vcz",
    "thrust",
    "roll",
    "pitch",
    "yaw",
    "theta_c",
    "psi_c",
    "rel_theta_c",
    "rel_psi_c",
    "gimbal_err",
    "target_px",
    "target_py",
    "target_pz",
]

CSV_FLOAT_FORMAT = "%.10g"


class RunStatus(str, Enum):
    OK = "ok"
    SAFETY_VIOLATION = "safety_violation"
    SOLVER_FAILURE = "solver_failure"


EXIT_CODES = {RunStatus.OK: 0, RunStatus.SAFETY_VIOLATION: 2, RunStatus.SOLVER_FAILURE: 3}


@dataclass(frozen=True)
class SafetyEvent:
    """First safety violation of a run: a UAV inside a zone or two UAVs too close."""

    time: float
    kind: str
    uav_ids: Tuple[str, ...]
    distance: float
    detail: str = ""

    def to_dict(self) -> Dict[str, object]:
        return {
            "time": self.time,
            "kind": self.kind,
            "uav_ids": list(self.uav_ids),
            "distance": self.distance,
            "detail": self.detail,
        }


@dataclass
class SimulationResult:
    scenario: Scenario
    trajectories: pd.DataFrame
    events: pd.DataFrame
    metrics: MetricsReport
    status: RunStatus = RunStatus.OK
    safety: Optional[SafetyEvent] = None
    halted_at: Optional[float] = None

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def summary(self) -> Dict[str, object]:
        out = {
            "scenario": self.scenario.name,
            "status": self.status.value,
            "halted_at": self.halted_at,
            "safety": None if self.safety is None else self.safety.to_dict(),
        }
        out.update(self.metrics.to_dict())
        return out

    def write(self, out_dir: Union[str, Path]) -> Path:
        """Write trajectories.csv, events.csv and metrics.json into ``out_dir``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.trajectories.to_csv(
            out / "trajectories.csv", index=False, float_format=CSV_FLOAT_FORMAT
        )
        self.events.to_csv(out / "events.csv", index=False, float_format=CSV_FLOAT_FORMAT)
        summary = json.dumps(self.summary(), indent=2, sort_keys=True)
        (out / "metrics.json").write_text(summary + "\n")
        logger.info("Wrote run outputs to %s", out)
        return out


def lag_step(state: UavState, v_cmd: np.ndarray, dt: float, tau: float) -> UavState:
    """
    Exact solution of v' = (v_cmd - v) / tau over ``dt`` with constant command.
    """
    decay = math.exp(-dt / tau)
    dv = state.v - v_cmd
    v_new = v_cmd + dv * decay
    p_new = state.p + v_cmd * dt + dv * tau * (1.0 - decay)
    return UavState(p_new, v_new)


class _TargetSensor:
    """Ground-truth target motion plus seeded measurement noise."""

    def __init__(self, scenario: Scenario):
        self.spec = scenario.target
        self.rng = np.random.default_rng(scenario.seed)

    def measure(self, t: float) -> Tuple[np.ndarray, np.ndarray, TargetEstimate]:
        p_true, v_true = self.spec.state_at(t)
        p_meas = p_true
        if self.spec.noise_std > 0:
            sigma = self.spec.noise_std
            p_meas = p_true + np.clip(self.rng.normal(0.0, sigma, 3), -3 * sigma, 3 * sigma)
        path = self.spec.path if self.spec.known_course else None
        return p_true, v_true, TargetEstimate(p_meas, v_true, path)


class _CameraLog:
    """Camera angles of one UAV, with the UAV yaw held while it hovers."""

    def __init__(self, initial_yaw: float):
        self.tracker = AttitudeTracker(initial_yaw)

    def row(self, state: UavState, accel: np.ndarray, target_p: np.ndarray) -> Dict[str, float]:
        att = self.tracker.update(state.v, accel)
        yaw = self.tracker.last_yaw if att is None else att.yaw
        out = {
            "thrust": float("nan") if att is None else att.thrust,
            "roll": float("nan") if att is None else att.roll,
            "pitch": float("nan") if att is None else att.pitch,
            "yaw": yaw,
        }
        try:
            _, theta, psi = world_gimbal_angles(state.p - target_p)
        except GimbalGeometryError:
            theta = psi = float("nan")
        out.update(
            theta_c=theta,
            psi_c=psi,
            rel_theta_c=theta,
            rel_psi_c=float("nan") if math.isnan(psi) else wrap_angle(psi - yaw),
        )
        return out


def _initial_yaw(state: UavState, target_p: np.ndarray) -> float:
    if math.hypot(state.v[0], state.v[1]) > 1e-3:
        return math.atan2(state.v[1], state.v[0])
    # A hovering UAV starts facing the target.
    d = target_p - state.p
    return math.atan2(d[1], d[0]) if math.hypot(d[0], d[1]) > 0 else 0.0


def check_safety(
    scenario: Scenario, states: Dict[str, UavState], t: float
) -> Optional[SafetyEvent]:
    """First violation at time ``t``: exact zone containment or separation below half r_col."""
    for spec in scenario.uavs:
        p = states[spec.uav_id].p
        for i, zone in enumerate(scenario.nofly):
            if zone.contains(p[:2]):
                depth = float(-zone.exact_distance(p[:2].reshape(1, 2))[0])
                return SafetyEvent(t, "nofly", (spec.uav_id,), depth, f"inside zone {i}")
    for a, b in combinations(scenario.uavs, 2):
        limit = SIMULATION_DEFAULTS.safety_fraction * min(a.bounds.r_col, b.bounds.r_col)
        dist = float(np.linalg.norm(states[a.uav_id].p - states[b.uav_id].p))
        if dist < limit:
            pair = (a.uav_id, b.uav_id)
            return SafetyEvent(t, "collision", pair, dist, f"closer than {limit:.2f} m")
    return None


def run(scenario: Scenario, deterministic: bool = False) -> SimulationResult:
    """
    Simulate ``scenario`` for its full duration.

    Args:
        scenario: Validated scenario
        deterministic: Disable solver time caps and zero the wall-time
            fields, so repeated runs produce byte-identical files

    Returns:
        SimulationResult; ``status`` tells whether the run was cut short by
        a safety violation or a solver failure cascade
    """
    dt = scenario.dt
    agents = build_agents(scenario, deterministic)
    by_id = {agent.uav_id: agent for agent in agents}
    bus = PlanBus(scenario.bus_delay)
    sensor = _TargetSensor(scenario)
    states = {spec.uav_id: spec.initial for spec in scenario.uavs}
    periods = {spec.uav_id: scenario.period_steps(spec.planner_rate) for spec in scenario.uavs}
    gimbal_period = scenario.period_steps(scenario.gimbal_rate)

    followers = {
        spec.uav_id: TrajectoryFollower(
            FollowerConfig(scenario.look_ahead, 1.0 / dt, spec.bounds.v_min, spec.bounds.v_max)
        )
        for spec in scenario.uavs
    }
    target0 = scenario.target.state_at(0.0)[0]
    gimbal_cfg = GimbalControllerConfig(scenario.k_omega, scenario.gimbal_rate)
    gimbals = {
        spec.uav_id: GimbalController.aligned(gimbal_cfg, spec.initial.p, target0)
        for spec in scenario.uavs
    }
    cameras = {
        spec.uav_id: _CameraLog(_initial_yaw(spec.initial, target0)) for spec in scenario.uavs
    }

    rows: List[Dict[str, object]] = []
    records = []
    status, safety, halted_at = RunStatus.OK, None, None
    logger.info(
        "Running %s: %d UAVs, %.1f s at dt=%.3f%s",
        scenario.name,
        len(agents),
        scenario.duration,
        dt,
        " (deterministic)" if deterministic else "",
    )

    for k in range(scenario.steps + 1):
        t = k * dt
        target_p, _, estimate = sensor.measure(t)

        due = [uav_id for uav_id, period in periods.items() if k % period == 0]
        if due:
            snapshot = WorldSnapshot(
                time=t,
                dt=dt,
                states=dict(states),
                target=estimate,
                nofly=scenario.nofly,
                target_obstacle_radius=scenario.target.obstacle_radius,
            )
            round_records = planning_round(
                agents, snapshot, bus, due, accept_violation=SOLVER_DEFAULTS.accept_violation
            )
            records.extend(round_records)
            for record in round_records:
                followers[record.uav_id].set_plan(by_id[record.uav_id].plan)

        commands = {}
        for spec in scenario.uavs:
            uav_id = spec.uav_id
            follower = followers[uav_id]
            command = follower.command(states[uav_id].p, t)
            accel = np.zeros(3) if command.exhausted else follower.plan.control_at(t)
            commands[uav_id] = command.velocity
            if k % gimbal_period == 0:
                gimbals[uav_id].update(states[uav_id].p, estimate.p)
            err, _ = gimbals[uav_id].error(states[uav_id].p, estimate.p)

            row = {"time": t, "uav_id": uav_id}
            row.update(zip(("px", "py", "pz"), states[uav_id].p))
            row.update(zip(("vx", "vy", "vz"), states[uav_id].v))
            row.update(zip(("ux", "uy", "uz"), accel))
            row.update(zip(("vcx", "vcy", "vcz"), command.velocity))
            row.update(cameras[uav_id].row(states[uav_id], accel, target_p))
            row["gimbal_err"] = err
            row.update(zip(("target_px", "target_py", "target_pz"), target_p))
            rows.append(row)

        cascade = SIMULATION_DEFAULTS.failure_cascade
        failing = [a.uav_id for a in agents if a.consecutive_failures >= cascade]
        if failing:
            status, halted_at = RunStatus.SOLVER_FAILURE, t
            logger.warning(
                "Solver failure cascade for %s at t=%.2f, halting", ", ".join(failing), t
            )
            break
        safety = check_safety(scenario, states, t)
        if safety is not None:
            status, halted_at = RunStatus.SAFETY_VIOLATION, t
            logger.warning(
                "Safety violation at t=%.2f: %s %s (%.3f m), halting",
                t,
                safety.kind,
                "/".join(safety.uav_ids),
                safety.distance,
            )
            break
        if k == scenario.steps:
            break

        for uav_id in states:
            states[uav_id] = lag_step(states[uav_id], commands[uav_id], dt, scenario.velocity_lag)
        for controller in gimbals.values():
            controller.integrate(dt)

    trajectories = pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)
    events = events_frame(records, zero_wall_time=deterministic)
    metrics = compute_metrics(trajectories, scenario, events, strict=False)
    for agent in agents:
        logger.info("%s: %d solves, %d fallbacks", agent.uav_id, agent.solves, agent.fallbacks)
    return SimulationResult(scenario, trajectories, events, metrics, status, safety, halted_at)
