"""
Trajectory following and gimbal control.

The follower is a pure-pursuit scheme on timestamped waypoints: it picks a
look-ahead waypoint at least L meters further along the plan and commands
the velocity that reaches it on time. The gimbal controller is a
first-order attitude controller on SO(3).
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from cineplan.coordination import PlannedTrajectory
from cineplan.exceptions import GimbalGeometryError
from cineplan.gimbal import camera_rotation, vee

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FollowerConfig:
    """
    Attributes:
        look_ahead: Minimum arc length to the look-ahead waypoint (m)
        rate: Follower rate (Hz)
        v_min, v_max: Componentwise velocity limits of the commands (m/s)
    """

    look_ahead: float = 1.0
    rate: float = 10.0
    v_min: Sequence[float] = (-10.0, -10.0, -10.0)
    v_max: Sequence[float] = (10.0, 10.0, 10.0)

    def __post_init__(self):
        if not self.look_ahead > 0:
            raise ValueError(f"look_ahead must be positive, got {self.look_ahead}")
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class GimbalControllerConfig:
    k_omega: float = 2.0
    rate: float = 10.0

    def __post_init__(self):
        if not self.k_omega > 0:
            raise ValueError(f"k_omega must be positive, got {self.k_omega}")
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class FollowCommand:
    velocity: np.ndarray
    exhausted: bool
    # Index of the look-ahead waypoint in the full trajectory; -1 when exhausted.
    index: int = -1


def clamp_velocity(v: np.ndarray, v_min: Sequence[float], v_max: Sequence[float]) -> np.ndarray:
    """Scale ``v`` down uniformly until every component is inside the limits."""
    scale = 1.0
    for comp, lo, hi in zip(v, v_min, v_max):
        if comp > hi:
            scale = min(scale, hi / comp)
        elif comp < lo:
            scale = min(scale, lo / comp)
    return v * scale


def _look_ahead_index(traj: PlannedTrajectory, p_now: np.ndarray, t_now: float, look_ahead: float):
    times = traj.times
    first = int(np.searchsorted(times, t_now - 1e-9, side="left"))
    if first >= len(times):
        return None
    pts = traj.states[first:, :3]
    closest = int(np.argmin(np.linalg.norm(pts - p_now, axis=1)))
    seg = np.linalg.norm(np.diff(pts[closest:], axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    ahead = np.nonzero(arc >= look_ahead - 1e-12)[0]
    local = int(ahead[0]) if len(ahead) else len(arc) - 1
    return first + closest + local


def _command_towards(traj: PlannedTrajectory, index: int, p_now, t_now, cfg: FollowerConfig):
    target = traj.states[index, :3]
    delta = target - p_now
    dist = float(np.linalg.norm(delta))
    time_left = traj.times[index] - t_now
    if dist < 1e-12 or time_left <= 1e-9:
        velocity = traj.states[index, 3:].copy()
    else:
        velocity = delta / time_left
    return clamp_velocity(velocity, cfg.v_min, cfg.v_max)


def follow(traj: PlannedTrajectory, p_now, t_now: float, cfg: FollowerConfig) -> FollowCommand:
    """
    Velocity command that tracks ``traj`` from ``p_now`` at ``t_now``.

    Waypoints stamped before ``t_now`` are discarded. When none remain the
    command is zero and ``exhausted`` is set, so the UAV hovers.
    """
    p_now = np.asarray(p_now, dtype=float)
    index = _look_ahead_index(traj, p_now, t_now, cfg.look_ahead)
    if index is None:
        return FollowCommand(np.zeros(3), True)
    return FollowCommand(_command_towards(traj, index, p_now, t_now, cfg), False, index)


class TrajectoryFollower:
    """
    Follower bound to the latest plan of one UAV.

    The look-ahead index never moves backwards along one plan; swapping in a
    new plan resets it.
    """

    def __init__(self, cfg: FollowerConfig):
        self.cfg = cfg
        self.plan: Optional[PlannedTrajectory] = None
        self._index = -1

    def set_plan(self, plan: Optional[PlannedTrajectory]) -> None:
        if plan is not self.plan:
            self.plan = plan
            self._index = -1

    def command(self, p_now, t_now: float) -> FollowCommand:
        if self.plan is None:
            return FollowCommand(np.zeros(3), True)
        p_now = np.asarray(p_now, dtype=float)
        index = _look_ahead_index(self.plan, p_now, t_now, self.cfg.look_ahead)
        if index is None:
            return FollowCommand(np.zeros(3), True)
        index = max(index, self._index)
        self._index = index
        velocity = _command_towards(self.plan, index, p_now, t_now, self.cfg)
        return FollowCommand(velocity, False, index)


def rotation_error_angle(r_current: np.ndarray, r_desired: np.ndarray) -> float:
    """Geodesic angle between two rotation matrices."""
    cos_angle = 0.5 * (np.trace(r_current.T @ r_desired) - 1.0)
    return float(math.acos(min(1.0, max(-1.0, cos_angle))))


def gimbal_command(
    r_current: np.ndarray,
    p_q,
    p_t,
    cfg: GimbalControllerConfig,
    hold: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Angular rate w = k_omega vee(R_e - R_e^T) with R_e = R_C^T R_C*.

    When the desired orientation is undefined (camera not above the target
    or straight above it), ``hold`` is returned, or zero without one.
    """
    q = np.asarray(p_q, dtype=float) - np.asarray(p_t, dtype=float)
    try:
        r_desired = camera_rotation(q)
    except GimbalGeometryError as exc:
        logger.debug("Holding gimbal command: %s", exc)
        return np.zeros(3) if hold is None else np.asarray(hold, dtype=float).copy()
    r_err = r_current.T @ r_desired
    return cfg.k_omega * vee(r_err - r_err.T)


class GimbalController:
    """Integrates the commanded rates on SO(3); holds the last command on singular geometry."""

    def __init__(self, cfg: GimbalControllerConfig, initial: Optional[np.ndarray] = None):
        self.cfg = cfg
        self.rotation = np.eye(3) if initial is None else np.asarray(initial, dtype=float)
        self.omega = np.zeros(3)

    @classmethod
    def aligned(cls, cfg: GimbalControllerConfig, p_q, p_t) -> "GimbalController":
        """Controller starting on the desired orientation, or level when it is undefined."""
        try:
            initial = camera_rotation(np.asarray(p_q, dtype=float) - np.asarray(p_t, dtype=float))
        except GimbalGeometryError:
            initial = None
        return cls(cfg, initial)

    def update(self, p_q, p_t) -> np.ndarray:
        self.omega = gimbal_command(self.rotation, p_q, p_t, self.cfg, hold=self.omega)
        return self.omega

    def integrate(self, dt: float) -> np.ndarray:
        self.rotation = self.rotation @ Rotation.from_rotvec(self.omega * dt).as_matrix()
        return self.rotation

    def error(self, p_q, p_t) -> Tuple[float, bool]:
        """Angle to the desired orientation and whether that orientation is defined."""
        try:
            r_desired = camera_rotation(np.asarray(p_q, dtype=float) - np.asarray(p_t, dtype=float))
        except GimbalGeometryError:
            return float("nan"), False
        return rotation_error_angle(self.rotation, r_desired), True
