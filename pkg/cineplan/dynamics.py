"""
Double-integrator quadrotor model.

State is position and velocity in the world ENU frame, control is the 3D
acceleration. Attitude and thrust are recovered from velocity and
acceleration assuming the vehicle yaws along its direction of motion.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from cineplan.config import GUARDS, PHYSICS
from cineplan.exceptions import NonFiniteInputError, SingularityError, YawUndefinedError

ArrayLike = Union[Sequence[float], np.ndarray]


def _vec3(values: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"{name} contains non-finite values: {arr}")
    return arr


def wrap_angle(angle):
    """Wrap angles to (-pi, pi]. Accepts scalars or arrays."""
    wrapped = np.pi - np.remainder(np.pi - np.asarray(angle, dtype=float), 2.0 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class UavState:
    """Planner state x_k: position (m) and velocity (m/s)."""

    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _vec3(self.p, "position"))
        object.__setattr__(self, "v", _vec3(self.v, "velocity"))

    @classmethod
    def from_vector(cls, x: ArrayLike) -> "UavState":
        arr = np.asarray(x, dtype=float).reshape(-1)
        if arr.shape != (6,):
            raise ValueError(f"State vector must have 6 entries, got {arr.shape}")
        return cls(arr[:3], arr[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])


@dataclass(frozen=True)
class ControlInput:
    """Planner control u_k: acceleration (m/s^2)."""

    a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _vec3(self.a, "acceleration"))


@dataclass(frozen=True)
class AttitudeThrust:
    """Collective thrust (N) and Z-Y-X Euler angles (roll, pitch, yaw) in radians."""

    thrust: float
    euler: np.ndarray

    @property
    def roll(self) -> float:
        return float(self.euler[0])

    @property
    def pitch(self) -> float:
        return float(self.euler[1])

    @property
    def yaw(self) -> float:
        return float(self.euler[2])


def _derivative(x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.concatenate([x[3:], u])


def step_rk4(x: UavState, u: ControlInput, dt: float) -> UavState:
    """
    Advance the double integrator by one classical Runge-Kutta step.

    The control is held constant over ``dt``, so the result matches the
    closed-form constant-acceleration solution up to round-off.

    Args:
        x: Current state
        u: Acceleration held over the step
        dt: Step length in seconds

    Returns:
        State after ``dt``
    """
    if not (math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    xv = x.as_vector()
    k1 = _derivative(xv, u.a)
    k2 = _derivative(xv + 0.5 * dt * k1, u.a)
    k3 = _derivative(xv + 0.5 * dt * k2, u.a)
    k4 = _derivative(xv + dt * k3, u.a)
    return UavState.from_vector(xv + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def step_rk4_batch(states: np.ndarray, controls: np.ndarray, dt: float) -> np.ndarray:
    """Vectorized RK4 step over rows of ``states`` (K, 6) and ``controls`` (K, 3)."""
    p = states[:, :3]
    v = states[:, 3:]
    a = controls
    # Stage velocities of RK4 under constant acceleration.
    v2 = v + 0.5 * dt * a
    v4 = v + dt * a
    p_next = p + dt / 6.0 * (v + 4.0 * v2 + v4)
    v_next = v + dt * a
    return np.hstack([p_next, v_next])


def rollout(x0: UavState, controls: np.ndarray, dt: float) -> np.ndarray:
    """
    Integrate a control sequence from ``x0``.

    Returns:
        Array of shape (len(controls) + 1, 6) with x0 first
    """
    controls = np.asarray(controls, dtype=float).reshape(-1, 3)
    states = np.empty((len(controls) + 1, 6))
    states[0] = x0.as_vector()
    for k, a in enumerate(controls):
        states[k + 1] = step_rk4_batch(states[k : k + 1], a[None, :], dt)[0]
    return states


def euler_zyx_to_matrix(euler: ArrayLike) -> np.ndarray:
    """Rotation matrix R = Rz(yaw) Ry(pitch) Rx(roll)."""
    phi, theta, psi = np.asarray(euler, dtype=float)
    cf, sf = math.cos(phi), math.sin(phi)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
            [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
            [-st, ct * sf, ct * cf],
        ]
    )


def velocity_yaw(v: ArrayLike, threshold: float = GUARDS.yaw_speed_threshold) -> float:
    """Yaw that points the vehicle along its horizontal velocity."""
    vx, vy = float(v[0]), float(v[1])
    if math.hypot(vx, vy) < threshold:
        raise YawUndefinedError(
            f"Horizontal speed {math.hypot(vx, vy):.2e} m/s is below {threshold} m/s"
        )
    return wrap_angle(math.atan2(vy, vx))


def recover_attitude(
    v: ArrayLike,
    a: ArrayLike,
    mass: float = PHYSICS.mass,
    g: float = PHYSICS.g,
) -> AttitudeThrust:
    """
    Recover thrust and Z-Y-X Euler angles from velocity and acceleration.

    Args:
        v: Velocity (m/s), defines the yaw
        a: Acceleration (m/s^2)
        mass: Vehicle mass (kg)
        g: Gravitational acceleration (m/s^2)

    Returns:
        AttitudeThrust with angles wrapped to (-pi, pi]

    Raises:
        SingularityError: If a + g e3 vanishes (free fall)
        YawUndefinedError: If the horizontal speed is too small to define yaw
    """
    v = _vec3(v, "velocity")
    a = _vec3(a, "acceleration")
    f = a + g * np.asarray(PHYSICS.e3)
    f_norm = float(np.linalg.norm(f))
    if f_norm == 0.0:
        raise SingularityError("Free-fall: thrust direction is undefined")
    psi = velocity_yaw(v)
    cp, sp = math.cos(psi), math.sin(psi)
    phi = -math.asin(np.clip((a[1] * cp - a[0] * sp) / f_norm, -1.0, 1.0))
    theta = math.atan2(a[0] * cp + a[1] * sp, a[2] + g)
    euler = np.array([wrap_angle(phi), wrap_angle(theta), psi])
    return AttitudeThrust(thrust=mass * f_norm, euler=euler)


def acceleration_from_attitude(
    att: AttitudeThrust, mass: float = PHYSICS.mass, g: float = PHYSICS.g
) -> np.ndarray:
    """Forward model a = -g e3 + R (T / m) e3."""
    e3 = np.asarray(PHYSICS.e3)
    return -g * e3 + euler_zyx_to_matrix(att.euler) @ e3 * (att.thrust / mass)


class AttitudeTracker:
    """Recovers attitude along a trajectory, holding the last valid yaw while hovering."""

    def __init__(self, initial_yaw: float = 0.0, mass: float = PHYSICS.mass, g: float = PHYSICS.g):
        self.last_yaw = wrap_angle(initial_yaw)
        self.mass = mass
        self.g = g
        self.yaw_held = False

    def update(self, v: ArrayLike, a: ArrayLike) -> Optional[AttitudeThrust]:
        """Return the attitude for (v, a); ``None`` only in free fall."""
        try:
            att = recover_attitude(v, a, self.mass, self.g)
        except YawUndefinedError:
            self.yaw_held = True
            # Same formulas with the held yaw.
            fake_v = np.array([math.cos(self.last_yaw), math.sin(self.last_yaw), 0.0])
            try:
                return recover_attitude(fake_v, a, self.mass, self.g)
            except SingularityError:
                return None
        except SingularityError:
            return None
        self.yaw_held = False
        self.last_yaw = att.yaw
        return att
