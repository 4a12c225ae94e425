"""Physical constants, numeric guards, parameter defaults and logging setup."""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class PhysicsConstants:
    """Gravity, vehicle mass and the world up axis."""

    g: float = 9.81
    mass: float = 1.0
    e3: Tuple[float, float, float] = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class PlannerGuards:
    """
    Thresholds that keep angle formulas away from their singular sets.

    Attributes:
        yaw_speed_threshold: Horizontal speed below which UAV yaw is undefined (m/s)
        horizontal_guard: Soft clamp of the camera-target horizontal distance (m)
        yaw_rate_speed_guard: Soft clamp of horizontal speed in the yaw-rate cost (m/s)
        yaw_row_speed_guard: Soft clamp of horizontal speed in the yaw bound rows (m/s)
        polygon_sharpness: Smooth-max sharpness for polygon distances (1/m)
        visibility_skip: Separation below which a visibility row is skipped (m)
        heading_speed_threshold: Target speed below which heading is held (m/s)
    """

    yaw_speed_threshold: float = 1e-3
    horizontal_guard: float = 0.1
    yaw_rate_speed_guard: float = 0.5
    yaw_row_speed_guard: float = 0.1
    polygon_sharpness: float = 20.0
    visibility_skip: float = 1e-6
    heading_speed_threshold: float = 0.1


PHYSICS = PhysicsConstants()
GUARDS = PlannerGuards()


@dataclass(frozen=True)
class PlannerWeights:
    """Cost weights: control effort, pitch rate, yaw rate, terminal state."""

    w1: float = 1.0
    w2: float = 0.0
    w3: float = 0.0
    w4: float = 1.0

    def __post_init__(self):
        values = (self.w1, self.w2, self.w3, self.w4)
        if not all(math.isfinite(w) and w >= 0 for w in values):
            raise ValueError(f"Weights must be finite and non-negative, got {values}")
        if not any(w > 0 for w in values):
            raise ValueError("At least one weight must be positive")

    def as_dict(self) -> Dict[str, float]:
        return {"w1": self.w1, "w2": self.w2, "w3": self.w3, "w4": self.w4}


@dataclass(frozen=True)
class PlannerBounds:
    """
    Box, gimbal, visibility and collision parameters of one planner.

    ``theta`` and ``psi`` are (min, max) relative gimbal angle limits in
    radians; ``None`` disables the corresponding rows.
    """

    v_min: Tuple[float, float, float] = (-10.0, -10.0, -10.0)
    v_max: Tuple[float, float, float] = (10.0, 10.0, 10.0)
    u_min: Tuple[float, float, float] = (-5.0, -5.0, -5.0)
    u_max: Tuple[float, float, float] = (5.0, 5.0, 5.0)
    theta: Optional[Tuple[float, float]] = (-math.pi / 2, -math.pi / 4)
    psi: Optional[Tuple[float, float]] = (-3 * math.pi / 4, 3 * math.pi / 4)
    alpha: float = math.pi / 6
    r_col: float = 2.0

    def __post_init__(self):
        for lo, hi, name in ((self.v_min, self.v_max, "v"), (self.u_min, self.u_max, "u")):
            if len(lo) != 3 or len(hi) != 3:
                raise ValueError(f"{name} bounds must be 3-vectors")
            if not all(a < b for a, b in zip(lo, hi)):
                raise ValueError(f"{name}_min must be < {name}_max componentwise")
        for pair, name in ((self.theta, "theta"), (self.psi, "psi")):
            if pair is not None and not pair[0] < pair[1]:
                raise ValueError(f"{name} bounds must satisfy min < max, got {pair}")
        if not 0.0 < self.alpha < math.pi / 2:
            raise ValueError(f"alpha must lie in (0, pi/2), got {self.alpha}")
        if not self.r_col > 0:
            raise ValueError(f"r_col must be positive, got {self.r_col}")

    @property
    def v_max_norm(self) -> float:
        """Largest speed that stays inside the velocity box along every axis."""
        return float(min(np.min(np.abs(self.v_min)), np.min(np.abs(self.v_max))))


DEFAULT_WEIGHTS = PlannerWeights()
DEFAULT_BOUNDS = PlannerBounds()

# Weight configurations compared in the flyby study.
WEIGHT_PRESETS: Dict[str, PlannerWeights] = {
    "no_cinematography": PlannerWeights(w1=1.0, w2=0.0, w3=0.0, w4=1.0),
    "low_pitch": PlannerWeights(w1=1.0, w2=100.0, w3=0.0, w4=1.0),
    "medium_pitch": PlannerWeights(w1=1.0, w2=1000.0, w3=0.0, w4=1.0),
    "high_pitch": PlannerWeights(w1=1.0, w2=10000.0, w3=0.0, w4=1.0),
    "low_yaw": PlannerWeights(w1=1.0, w2=0.0, w3=0.5, w4=1.0),
    "high_yaw": PlannerWeights(w1=1.0, w2=0.0, w3=1.0, w4=1.0),
    "full_cinematography": PlannerWeights(w1=1.0, w2=10000.0, w3=0.5, w4=1.0),
}


@dataclass(frozen=True)
class SolverDefaults:
    feasibility_tol: float = 1e-4
    optimality_tol: float = 1e-3
    max_iterations: int = 50
    max_inner_iterations: int = 400
    # Fraction of the planning period granted to one solve when the cap is "auto".
    wall_time_fraction: float = 0.5
    # Non-converged plans are still published below this violation.
    accept_violation: float = 1e-2


SOLVER_DEFAULTS = SolverDefaults()

THREADS_ENV_VAR = "CINEPLAN_THREADS"

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(level: int = logging.WARNING) -> None:
    """Install a single stderr handler on the root logger."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level)


def verbosity_to_level(verbose: int = 0, quiet: bool = False) -> int:
    if quiet:
        return logging.ERROR
    return {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)


# Planner-only inflation of no-fly zones (m).
DEFAULT_ZONE_MARGIN = 0.3


@dataclass(frozen=True)
class SimulationDefaults:
    dt: float = 0.1
    velocity_lag: float = 0.3
    look_ahead: float = 1.0
    k_omega: float = 2.0
    gimbal_rate: float = 10.0
    # Consecutive rejected solves of one UAV that abort a run.
    failure_cascade: int = 3
    # Safety halt when two UAVs come closer than this fraction of r_col.
    safety_fraction: float = 0.5


SIMULATION_DEFAULTS = SimulationDefaults()
