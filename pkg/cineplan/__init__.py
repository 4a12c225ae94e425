"""
Cineplan - receding-horizon trajectory planning for UAV cinematography teams.

This library provides:
- Quadrotor dynamics and gimbal geometry
- Shot semantics and target prediction
- Optimal control transcription and an augmented Lagrangian solver
- Priority-based multi-UAV coordination
- Trajectory following, gimbal control and a deterministic simulator
"""

__version__ = "0.1.0"
__author__ = "Cineplan Contributors"

from cineplan.config import (
    DEFAULT_BOUNDS,
    DEFAULT_WEIGHTS,
    WEIGHT_PRESETS,
    PlannerBounds,
    PlannerWeights,
)
from cineplan.coordination import PlanBus, PlannedTrajectory, latest_plan, planning_round
from cineplan.dynamics import (
    AttitudeThrust,
    ControlInput,
    UavState,
    recover_attitude,
    rollout,
    step_rk4,
)
from cineplan.execution import follow, gimbal_command
from cineplan.gimbal import GimbalAngles, gimbal_angles, gimbal_rates
from cineplan.metrics import MetricsReport, compute_metrics
from cineplan.ocp import OcpProblem, build, constraints_and_jacobian, cost_and_gradient
from cineplan.scenario import Scenario, load_scenario
from cineplan.shots import (
    DesiredState,
    ShotSpec,
    ShotType,
    TargetEstimate,
    desired_state,
    eight_path,
    predict_target,
)
from cineplan.simulation import SimulationResult, run
from cineplan.solver import SolveOptions, SolveResult, SolveStatus, solve

__all__ = [
    # Configuration
    "PlannerWeights",
    "PlannerBounds",
    "DEFAULT_WEIGHTS",
    "DEFAULT_BOUNDS",
    "WEIGHT_PRESETS",
    # Dynamics
    "UavState",
    "ControlInput",
    "AttitudeThrust",
    "step_rk4",
    "rollout",
    "recover_attitude",
    # Gimbal
    "GimbalAngles",
    "gimbal_angles",
    "gimbal_rates",
    # Shots
    "ShotType",
    "ShotSpec",
    "TargetEstimate",
    "DesiredState",
    "predict_target",
    "desired_state",
    "eight_path",
    # Planning
    "OcpProblem",
    "build",
    "cost_and_gradient",
    "constraints_and_jacobian",
    "SolveOptions",
    "SolveResult",
    "SolveStatus",
    "solve",
    # Coordination
    "PlannedTrajectory",
    "PlanBus",
    "latest_plan",
    "planning_round",
    # Execution
    "follow",
    "gimbal_command",
    # Simulation
    "Scenario",
    "load_scenario",
    "SimulationResult",
    "run",
    "MetricsReport",
    "compute_metrics",
]
