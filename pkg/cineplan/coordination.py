"""
Priority planning rounds and plan exchange between UAVs.

UAVs plan one after the other in priority order. Each one constrains its
problem against the latest delivered plans of every higher-priority UAV and
publishes its own plan on a bus with a constant delivery delay.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from cineplan.config import SOLVER_DEFAULTS, PlannerBounds, PlannerWeights
from cineplan.dynamics import UavState, rollout
from cineplan.ocp import DynamicObstacle, NeighborPlan, OcpProblem, build
from cineplan.shots import (
    ShotSpec,
    TargetEstimate,
    active_shot,
    desired_state,
    predict_target,
    target_heading,
)
from cineplan.solver import SolveOptions, SolveResult, SolveStatus, solve
from cineplan.zones import NoFlyZone

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlannedTrajectory:
    """
    Timestamped output of one solve.

    States are re-integrated from the controls, so they satisfy the RK4
    dynamics exactly.
    """

    uav_id: str
    stamp_start: float
    dt: float
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        controls = np.asarray(self.controls, dtype=float)
        if states.ndim != 2 or states.shape[1] != 6 or controls.shape != (len(states) - 1, 3):
            raise ValueError(
                f"Need (N+1, 6) states and (N, 3) controls, got {states.shape} and {controls.shape}"
            )
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    @classmethod
    def from_controls(
        cls, uav_id: str, stamp_start: float, dt: float, x0: UavState, controls: np.ndarray
    ) -> "PlannedTrajectory":
        return cls(uav_id, stamp_start, dt, rollout(x0, controls, dt), np.asarray(controls))

    @property
    def horizon_steps(self) -> int:
        return len(self.controls)

    @property
    def times(self) -> np.ndarray:
        return self.stamp_start + self.dt * np.arange(len(self.states))

    @property
    def stamp_end(self) -> float:
        return self.stamp_start + self.dt * self.horizon_steps

    def positions_at(self, times) -> np.ndarray:
        """Positions at absolute ``times``; constant velocity outside the plan."""
        t = np.atleast_1d(np.asarray(times, dtype=float))
        stamps = self.times
        out = np.column_stack([np.interp(t, stamps, self.states[:, i]) for i in range(3)])
        after = t > stamps[-1]
        out[after] = self.states[-1, :3] + (t[after] - stamps[-1])[:, None] * self.states[-1, 3:]
        before = t < stamps[0]
        out[before] = self.states[0, :3] + (t[before] - stamps[0])[:, None] * self.states[0, 3:]
        return out

    def control_at(self, t: float) -> np.ndarray:
        """Control held over the step containing ``t``; zero outside the plan."""
        k = int(math.floor((t - self.stamp_start) / self.dt + 1e-9))
        if 0 <= k < self.horizon_steps:
            return self.controls[k].copy()
        return np.zeros(3)


@dataclass(frozen=True)
class PlanBusMessage:
    trajectory: PlannedTrajectory
    send_time: float
    deliver_time: float


class PlanBus:
    """
    Broadcast channel with a constant delivery delay.

    Only the newest delivered message of each UAV and the messages still in
    flight are kept, so query times must not decrease.
    """

    def __init__(self, delay: float = 0.0):
        if delay < 0:
            raise ValueError(f"Bus delay must be non-negative, got {delay}")
        self.delay = float(delay)
        self.delivered: Dict[str, PlanBusMessage] = {}
        self.in_flight: List[PlanBusMessage] = []

    @property
    def messages(self) -> List[PlanBusMessage]:
        return list(self.delivered.values()) + self.in_flight

    def publish(self, trajectory: PlannedTrajectory, send_time: float) -> PlanBusMessage:
        message = PlanBusMessage(trajectory, send_time, send_time + self.delay)
        self.in_flight.append(message)
        return message

    def _deliver(self, query_time: float) -> None:
        pending = []
        for message in self.in_flight:
            if message.deliver_time > query_time:
                pending.append(message)
                continue
            uav_id = message.trajectory.uav_id
            current = self.delivered.get(uav_id)
            if current is None or message.deliver_time >= current.deliver_time:
                self.delivered[uav_id] = message
        self.in_flight = pending

    def latest_plan(self, uav_id: str, query_time: float) -> Optional[PlannedTrajectory]:
        self._deliver(query_time)
        message = self.delivered.get(uav_id)
        if message is None or message.deliver_time > query_time:
            return None
        return message.trajectory


def latest_plan(bus: PlanBus, uav_id: str, query_time: float) -> Optional[PlannedTrajectory]:
    return bus.latest_plan(uav_id, query_time)


@dataclass
class AgentConfig:
    """Static planning setup of one UAV."""

    uav_id: str
    priority: int
    shots: Sequence[ShotSpec]
    horizon_steps: int
    planner_rate: float
    weights: PlannerWeights
    bounds: PlannerBounds
    visibility: bool = True
    # None disables the time cap.
    max_wall_time: Optional[float] = None
    max_iterations: int = SOLVER_DEFAULTS.max_iterations
    feasibility_tol: float = SOLVER_DEFAULTS.feasibility_tol
    optimality_tol: float = SOLVER_DEFAULTS.optimality_tol


@dataclass
class UavAgent:
    """Planning state of one UAV across rounds."""

    config: AgentConfig
    plan: Optional[PlannedTrajectory] = None
    consecutive_failures: int = 0
    heading: float = 0.0
    solves: int = 0
    fallbacks: int = 0
    last_status: Optional[SolveStatus] = None
    last_accepted: bool = True

    @property
    def timed_out(self) -> bool:
        """True when the previous solve hit its time cap and was rejected."""
        return self.last_status is SolveStatus.MAX_TIME and not self.last_accepted

    @property
    def uav_id(self) -> str:
        return self.config.uav_id

    @property
    def priority(self) -> int:
        return self.config.priority


@dataclass
class WorldSnapshot:
    """Everything a planning round reads; built once per round."""

    time: float
    dt: float
    states: Dict[str, UavState]
    target: TargetEstimate
    nofly: Sequence[NoFlyZone] = field(default_factory=list)
    target_obstacle_radius: Optional[float] = None


@dataclass
class RoundRecord:
    time: float
    uav_id: str
    priority: int
    result: SolveResult
    accepted: bool
    trajectory: Optional[PlannedTrajectory]
    neighbors: List[str]
    staleness: Dict[str, float]
    fallback: str = ""


def build_problem(
    agent: UavAgent, snapshot: WorldSnapshot, neighbors: Sequence[PlannedTrajectory]
) -> OcpProblem:
    """Assemble the planning problem of ``agent`` against ``neighbors``' plans."""
    cfg = agent.config
    n_steps, dt = cfg.horizon_steps, snapshot.dt
    prediction = predict_target(snapshot.target, n_steps, dt)
    agent.heading = target_heading(snapshot.target.v, agent.heading)
    shot, elapsed = active_shot(cfg.shots, snapshot.time)
    desired = desired_state(shot, prediction, elapsed, n_steps * dt, agent.heading)

    step_times = snapshot.time + dt * np.arange(n_steps + 1)
    neighbor_plans = [
        NeighborPlan(plan.uav_id, plan.positions_at(step_times)) for plan in neighbors
    ]
    obstacles = []
    if snapshot.target_obstacle_radius is not None:
        obstacles.append(
            DynamicObstacle(prediction.positions, snapshot.target_obstacle_radius, name="target")
        )
    return OcpProblem(
        x0=snapshot.states[cfg.uav_id],
        horizon_steps=n_steps,
        dt=dt,
        weights=cfg.weights,
        bounds=cfg.bounds,
        desired=desired,
        target_pred=prediction,
        nofly=list(snapshot.nofly),
        neighbor_plans=neighbor_plans,
        dynamic_obstacles=obstacles,
        visibility=cfg.visibility,
    )


def plan_agent(
    agent: UavAgent,
    snapshot: WorldSnapshot,
    bus: PlanBus,
    higher: Sequence[UavAgent],
    accept_violation: float = SOLVER_DEFAULTS.accept_violation,
) -> RoundRecord:
    """Solve and, when acceptable, publish the plan of a single UAV."""
    cfg = agent.config
    neighbors, staleness = [], {}
    for other in higher:
        plan = bus.latest_plan(other.uav_id, snapshot.time)
        if plan is None:
            logger.info("%s: no plan from %s delivered yet", cfg.uav_id, other.uav_id)
            continue
        neighbors.append(plan)
        staleness[other.uav_id] = snapshot.time - plan.stamp_start
        if staleness[other.uav_id] > 0:
            logger.debug(
                "%s: plan of %s is %.2f s old", cfg.uav_id, other.uav_id, staleness[other.uav_id]
            )

    nlp = build(build_problem(agent, snapshot, neighbors))
    if agent.timed_out:
        logger.info("%s: previous solve timed out, starting from the measured state", cfg.uav_id)
        guess = nlp.hover_guess()
    elif agent.plan is not None:
        shift = int(round((snapshot.time - agent.plan.stamp_start) / snapshot.dt))
        guess = nlp.warm_start(agent.plan.controls, shift)
    else:
        guess = nlp.initial_guess()
    options = SolveOptions(
        max_wall_time=cfg.max_wall_time,
        max_iterations=cfg.max_iterations,
        feasibility_tol=cfg.feasibility_tol,
        optimality_tol=cfg.optimality_tol,
        initial_guess=guess,
    )
    result = solve(nlp, options)
    agent.solves += 1

    accepted = (
        result.status is SolveStatus.CONVERGED
        or result.constraint_violation <= accept_violation
    )
    agent.last_status, agent.last_accepted = result.status, accepted

    trajectory, fallback = None, ""
    if accepted:
        trajectory = PlannedTrajectory.from_controls(
            cfg.uav_id,
            snapshot.time,
            snapshot.dt,
            snapshot.states[cfg.uav_id],
            nlp.controls(result.z),
        )
        agent.plan = trajectory
        agent.consecutive_failures = 0
        bus.publish(trajectory, snapshot.time)
    else:
        agent.consecutive_failures += 1
        agent.fallbacks += 1
        fallback = "keep_plan" if agent.plan is not None else "hover"
        logger.warning(
            "%s: solve %s with violation %.2e at t=%.2f, falling back to %s",
            cfg.uav_id,
            result.status.value,
            result.constraint_violation,
            snapshot.time,
            fallback,
        )
    return RoundRecord(
        time=snapshot.time,
        uav_id=cfg.uav_id,
        priority=cfg.priority,
        result=result,
        accepted=accepted,
        trajectory=trajectory,
        neighbors=[plan.uav_id for plan in neighbors],
        staleness=staleness,
        fallback=fallback,
    )


def planning_round(
    agents: Sequence[UavAgent],
    snapshot: WorldSnapshot,
    bus: PlanBus,
    due: Optional[Sequence[str]] = None,
    accept_violation: float = SOLVER_DEFAULTS.accept_violation,
) -> List[RoundRecord]:
    """
    Run one round in priority order (1 plans first).

    Args:
        agents: All UAVs of the team
        snapshot: World state at the round time
        bus: Plan exchange
        due: Ids of the UAVs that replan this round; all when ``None``
        accept_violation: Largest violation of a non-converged plan that is still used

    Returns:
        One record per planning UAV, in execution order
    """
    ordered = sorted(agents, key=lambda agent: agent.priority)
    records = []
    for i, agent in enumerate(ordered):
        if due is not None and agent.uav_id not in due:
            continue
        records.append(plan_agent(agent, snapshot, bus, ordered[:i], accept_violation))
    if records:
        logger.info(
            "Round at t=%.2f: %s",
            snapshot.time,
            ", ".join(f"{r.uav_id}={r.result.status.value}" for r in records),
        )
    return records


EVENT_COLUMNS = [
    "time",
    "uav_id",
    "priority",
    "status",
    "accepted",
    "retried",
    "iterations",
    "wall_time",
    "cost",
    "max_violation",
    "kkt_residual",
    "neighbors",
    "max_staleness",
    "fallback",
]


def events_frame(records: Sequence[RoundRecord], zero_wall_time: bool = False) -> pd.DataFrame:
    """Event log with one row per solve, in execution order."""
    rows = [
        {
            "time": r.time,
            "uav_id": r.uav_id,
            "priority": r.priority,
            "status": r.result.status.value,
            "accepted": r.accepted,
            "retried": r.result.retried,
            "iterations": r.result.iterations,
            "wall_time": 0.0 if zero_wall_time else r.result.wall_time,
            "cost": r.result.cost,
            "max_violation": r.result.constraint_violation,
            "kkt_residual": r.result.kkt_residual,
            "neighbors": ";".join(r.neighbors),
            "max_staleness": max(r.staleness.values(), default=0.0),
            "fallback": r.fallback,
        }
        for r in records
    ]
    return pd.DataFrame(rows, columns=EVENT_COLUMNS)
