"""
Shot semantics and target motion prediction.

A shot turns a prediction of the target motion into the desired terminal
state of each planning problem. Offsets are expressed in the target heading
frame, so every shot rotates rigidly with the target.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import LineString, Point

from cineplan.config import GUARDS
from cineplan.dynamics import ArrayLike, _vec3
from cineplan.exceptions import NonFiniteInputError, ShotCompleteError

logger = logging.getLogger(__name__)


class TargetPath:
    """
    Known course of the target: a 2D polyline flown at a constant height.

    Arc-length positions wrap around when the path is closed and are
    clamped to the ends otherwise.

    Args:
        waypoints: (M, 2) or (M, 3) vertices; a third column is ignored
        height: z coordinate of the target on the path (m)
        closed: Whether the path loops back to its first vertex
    """

    def __init__(self, waypoints: ArrayLike, height: float = 0.0, closed: bool = False):
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] not in (2, 3):
            raise ValueError("A path needs at least two 2D waypoints")
        if not np.all(np.isfinite(pts)):
            raise NonFiniteInputError("Path waypoints contain non-finite values")
        pts = pts[:, :2]
        if closed and not np.allclose(pts[0], pts[-1]):
            pts = np.vstack([pts, pts[:1]])
        self.waypoints = pts
        self.height = float(height)
        self.closed = bool(closed)
        self.line = LineString(pts)
        if self.line.length <= 0.0:
            raise ValueError("Path has zero length")
        shapely.prepare(self.line)
        seg = np.diff(pts, axis=0)
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self._seg_dir = seg / np.where(self._seg_len > 0, self._seg_len, 1.0)[:, None]

    @property
    def length(self) -> float:
        return float(self.line.length)

    def _normalize(self, s: np.ndarray) -> np.ndarray:
        if self.closed:
            return np.mod(s, self.length)
        return np.clip(s, 0.0, self.length)

    def locate(self, point: ArrayLike) -> float:
        """Arc length of the path point closest to ``point``."""
        p = np.asarray(point, dtype=float)
        return float(self.line.project(Point(p[0], p[1])))

    def distance(self, point: ArrayLike) -> float:
        p = np.asarray(point, dtype=float)
        return float(self.line.distance(Point(p[0], p[1])))

    def point(self, s) -> np.ndarray:
        """3D points at arc lengths ``s`` (scalar or array)."""
        s_arr = self._normalize(np.atleast_1d(np.asarray(s, dtype=float)))
        xy = shapely.get_coordinates(shapely.line_interpolate_point(self.line, s_arr))
        out = np.column_stack([xy, np.full(len(xy), self.height)])
        return out[0] if np.ndim(s) == 0 else out

    def tangent(self, s) -> np.ndarray:
        """Unit 3D tangents (zero z) at arc lengths ``s``."""
        s_arr = self._normalize(np.atleast_1d(np.asarray(s, dtype=float)))
        idx = np.searchsorted(self._cum, s_arr, side="right") - 1
        idx = np.clip(idx, 0, len(self._seg_len) - 1)
        xy = self._seg_dir[idx]
        out = np.column_stack([xy, np.zeros(len(xy))])
        return out[0] if np.ndim(s) == 0 else out


def eight_path(
    scale: float,
    speed: float,
    center: Sequence[float] = (0.0, 0.0),
    height: float = 0.0,
    segments: int = 400,
) -> Tuple[TargetPath, float]:
    """
    Figure-eight course: Gerono lemniscate x = A sin t, y = A sin t cos t.

    The curve is densely sampled, resampled to ``segments`` pieces of equal
    arc length and closed. Returns the path together with the constant
    traversal speed.
    """
    if not (scale > 0 and speed > 0):
        raise ValueError(f"scale and speed must be positive, got {scale}, {speed}")
    t = np.linspace(0.0, 2.0 * np.pi, 20 * segments + 1)
    x = scale * np.sin(t)
    y = scale * np.sin(t) * np.cos(t)
    arc = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(x), np.diff(y)))])
    s = np.linspace(0.0, arc[-1], segments + 1)
    xs = np.interp(s, arc, x) + center[0]
    ys = np.interp(s, arc, y) + center[1]
    pts = np.column_stack([xs, ys])
    pts[-1] = pts[0]
    return TargetPath(pts, height=height, closed=True), float(speed)


@dataclass(frozen=True)
class TargetEstimate:
    """Measured target state, with an optional known course."""

    p: np.ndarray
    v: np.ndarray
    path: Optional[TargetPath] = None

    def __post_init__(self):
        object.__setattr__(self, "p", _vec3(self.p, "target position"))
        object.__setattr__(self, "v", _vec3(self.v, "target velocity"))
        if self.path is not None and self.path.distance(self.p) > 1.0:
            raise ValueError(
                f"Target at {self.p} is {self.path.distance(self.p):.2f} m from its known course"
            )


@dataclass(frozen=True)
class TargetPrediction:
    """Predicted target positions and velocities at ``times`` relative to now."""

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """Interpolated (p, v) at relative time ``t``, constant velocity outside."""
        if t <= self.times[0]:
            return self.positions[0] + self.velocities[0] * (t - self.times[0]), self.velocities[0]
        if t >= self.times[-1]:
            return (
                self.positions[-1] + self.velocities[-1] * (t - self.times[-1]),
                self.velocities[-1],
            )
        p = np.array([np.interp(t, self.times, self.positions[:, i]) for i in range(3)])
        v = np.array([np.interp(t, self.times, self.velocities[:, i]) for i in range(3)])
        return p, v


def predict_target(est: TargetEstimate, horizon_steps: int, dt: float) -> TargetPrediction:
    """
    Predict the target over ``horizon_steps`` steps of ``dt``.

    Without a known course the target keeps its velocity. With one, it
    advances along the course at its current speed.
    """
    if horizon_steps < 1:
        raise ValueError(f"horizon_steps must be >= 1, got {horizon_steps}")
    times = np.arange(horizon_steps + 1) * dt
    if est.path is None:
        positions = est.p + times[:, None] * est.v
        velocities = np.tile(est.v, (len(times), 1))
        return TargetPrediction(times, positions, velocities)

    speed = float(np.linalg.norm(est.v))
    s = est.path.locate(est.p) + speed * times
    positions = est.path.point(s)
    velocities = speed * est.path.tangent(s)
    return TargetPrediction(times, positions, velocities)


class ShotType(str, Enum):
    CHASE = "chase"
    LEAD = "lead"
    LATERAL = "lateral"
    FLYBY = "flyby"
    ORBIT = "orbit"


@dataclass(frozen=True)
class ShotSpec:
    """
    One cinematography shot.

    Attributes:
        kind: Shot type
        duration: Shot length (s)
        altitude: Height of the camera above ground (m)
        distance: Standoff for chase/lead, side distance for lateral (m)
        side: +1 for the left of the target, -1 for the right (lateral)
        behind: Start distance behind the target (flyby)
        ahead: End distance ahead of the target (flyby)
        radius: Orbit radius (m)
        start_azimuth: Orbit azimuth at the start, in the heading frame (rad)
        start_time: Simulation time at which the shot starts (s)
    """

    kind: ShotType
    duration: float
    altitude: float
    distance: float = 0.0
    side: int = 1
    behind: float = 0.0
    ahead: float = 0.0
    radius: float = 0.0
    start_azimuth: float = math.pi
    start_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ShotType(self.kind))
        if not self.duration > 0:
            raise ValueError(f"Shot duration must be positive, got {self.duration}")
        if not self.altitude > 0:
            raise ValueError(f"Shot altitude must be positive, got {self.altitude}")
        required = {
            ShotType.CHASE: ("distance",),
            ShotType.LEAD: ("distance",),
            ShotType.LATERAL: ("distance",),
            ShotType.FLYBY: ("behind", "ahead"),
            ShotType.ORBIT: ("radius",),
        }[self.kind]
        for name in required:
            if not getattr(self, name) > 0:
                raise ValueError(f"{self.kind.value} shot needs {name} > 0")
        if self.side not in (1, -1):
            raise ValueError(f"side must be +1 (left) or -1 (right), got {self.side}")

    @property
    def end_time(self) -> float:
        return self.start_time + self.duration


@dataclass(frozen=True)
class DesiredState:
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _vec3(self.p, "desired position"))
        object.__setattr__(self, "v", _vec3(self.v, "desired velocity"))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])


def target_heading(v: ArrayLike, fallback: float = 0.0) -> float:
    """Heading of the target velocity, or ``fallback`` when it moves too slowly."""
    if math.hypot(v[0], v[1]) < GUARDS.heading_speed_threshold:
        logger.debug("Target nearly static, holding heading %.3f rad", fallback)
        return fallback
    return math.atan2(v[1], v[0])


def _shot_offset(shot: ShotSpec, progress: float) -> Tuple[np.ndarray, np.ndarray]:
    """Offset and its rate with respect to progress, in the heading frame (x forward, y left)."""
    if shot.kind is ShotType.CHASE:
        return np.array([-shot.distance, 0.0]), np.zeros(2)
    if shot.kind is ShotType.LEAD:
        return np.array([shot.distance, 0.0]), np.zeros(2)
    if shot.kind is ShotType.LATERAL:
        return np.array([0.0, shot.side * shot.distance]), np.zeros(2)
    if shot.kind is ShotType.FLYBY:
        x = -shot.behind + (shot.behind + shot.ahead) * progress
        return np.array([x, 0.0]), np.array([shot.behind + shot.ahead, 0.0])
    gamma = shot.start_azimuth + 2.0 * math.pi * progress
    offset = shot.radius * np.array([math.cos(gamma), math.sin(gamma)])
    rate = shot.radius * 2.0 * math.pi * np.array([-math.sin(gamma), math.cos(gamma)])
    return offset, rate


def desired_state(
    shot: ShotSpec,
    prediction: TargetPrediction,
    shot_elapsed: float,
    horizon: float,
    heading_fallback: float = 0.0,
) -> DesiredState:
    """
    Desired terminal state for a planning problem.

    The target is queried at min(shot_elapsed + horizon, duration) into the
    shot, relative to ``prediction`` which starts now.

    Args:
        shot: Active shot
        prediction: Target prediction starting at the current time
        shot_elapsed: Time since the shot started (s)
        horizon: Planning horizon (s)
        heading_fallback: Heading used when the target is nearly static

    Raises:
        ShotCompleteError: If ``shot_elapsed`` exceeds the shot duration
    """
    if shot_elapsed < 0:
        raise ValueError(f"shot_elapsed must be >= 0, got {shot_elapsed}")
    if shot_elapsed > shot.duration:
        raise ShotCompleteError(
            f"{shot.kind.value} shot ended {shot_elapsed - shot.duration:.3f} s ago"
        )
    query = min(shot_elapsed + horizon, shot.duration)
    p_t, v_t = prediction.at(query - shot_elapsed)
    heading = target_heading(v_t, heading_fallback)
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, -s], [s, c]])

    offset, rate = _shot_offset(shot, query / shot.duration)
    p_d = np.array([p_t[0], p_t[1], shot.altitude])
    p_d[:2] += rot @ offset
    v_d = np.array([v_t[0], v_t[1], 0.0])
    if query < shot.duration:
        v_d[:2] += rot @ rate / shot.duration
    return DesiredState(p_d, v_d)


def active_shot(shots: Sequence[ShotSpec], t: float) -> Tuple[ShotSpec, float]:
    """
    Shot running at time ``t`` and its elapsed time.

    Before the first shot the first one is returned at elapsed 0; after the
    last one, the last shot is held at elapsed = duration.
    """
    ordered = sorted(shots, key=lambda shot: shot.start_time)
    if not ordered:
        raise ValueError("No shots scheduled")
    if t <= ordered[0].start_time:
        return ordered[0], 0.0
    for shot in ordered:
        if shot.start_time <= t < shot.end_time:
            return shot, t - shot.start_time
    # Between or after shots: hold the most recently finished one.
    last = [shot for shot in ordered if shot.start_time <= t][-1]
    return last, last.duration
