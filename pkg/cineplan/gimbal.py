"""
Camera gimbal geometry.

The camera sits at the UAV origin and always points at the target, so its
world orientation follows from the relative position q = p_C - p_T alone.
Roll is zero and the UAV body is taken as level when expressing the gimbal
angles relative to the quadrotor.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from cineplan.config import GUARDS
from cineplan.dynamics import ArrayLike, _vec3, velocity_yaw, wrap_angle
from cineplan.exceptions import GimbalGeometryError


@dataclass(frozen=True)
class GimbalAngles:
    """World Z-Y-X camera angles plus pitch and yaw relative to the UAV body."""

    phi_c: float
    theta_c: float
    psi_c: float
    rel_theta: float
    rel_psi: float


def _check_relative_position(q: np.ndarray) -> float:
    h = math.hypot(q[0], q[1])
    if q[2] <= 0.0:
        raise GimbalGeometryError(f"Camera must be above the target, got q_z={q[2]}")
    if h == 0.0:
        raise GimbalGeometryError("Camera is directly above the target")
    return h


def world_gimbal_angles(q: ArrayLike) -> Tuple[float, float, float]:
    """
    Return (phi_C, theta_C, psi_C) for relative position ``q``.

    Raises:
        GimbalGeometryError: If the camera is not above the target or is
            directly above it
    """
    q = _vec3(q, "relative position")
    h = _check_relative_position(q)
    theta = math.atan2(-h, q[2])
    psi = wrap_angle(math.atan2(-q[1], -q[0]))
    return 0.0, theta, psi


def relative_gimbal_angles(q: ArrayLike, v_q: ArrayLike) -> Tuple[float, float]:
    """Return (rel_theta, rel_psi), the gimbal angles measured from the UAV heading."""
    _, theta, psi = world_gimbal_angles(q)
    yaw = velocity_yaw(_vec3(v_q, "velocity"))
    return theta, wrap_angle(psi - yaw)


def gimbal_angles(q: ArrayLike, v_q: ArrayLike) -> GimbalAngles:
    phi, theta, psi = world_gimbal_angles(q)
    rel_theta, rel_psi = relative_gimbal_angles(q, v_q)
    return GimbalAngles(phi, theta, psi, rel_theta, rel_psi)


def camera_rotation(q: ArrayLike) -> np.ndarray:
    """Desired camera rotation R_C* = Rz(psi_C) Ry(theta_C); its third column is q/|q|."""
    _, theta, psi = world_gimbal_angles(q)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [cp * ct, -sp, cp * st],
            [sp * ct, cp, sp * st],
            [-st, 0.0, ct],
        ]
    )


def gimbal_rates(
    q: ArrayLike, q_dot: ArrayLike, v_q: ArrayLike, a_q: ArrayLike
) -> Tuple[float, float]:
    """
    Time derivatives of the relative gimbal pitch and yaw.

    Args:
        q: Relative position p_C - p_T (m)
        q_dot: Relative velocity v_Q - v_T (m/s)
        v_q: UAV velocity (m/s)
        a_q: UAV acceleration (m/s^2)

    Returns:
        (d theta_C / dt, d rel_psi_C / dt) in rad/s

    Raises:
        GimbalGeometryError: Camera not above the target or directly above it
        YawUndefinedError: UAV horizontal speed too small to define its yaw
    """
    q = _vec3(q, "relative position")
    r = _vec3(q_dot, "relative velocity")
    v = _vec3(v_q, "velocity")
    a = _vec3(a_q, "acceleration")
    h = _check_relative_position(q)
    velocity_yaw(v)

    n = q[0] * r[0] + q[1] * r[1]
    theta_dot = (h * r[2] - q[2] * n / h) / (h * h + q[2] * q[2])
    psi_c_dot = (q[0] * r[1] - q[1] * r[0]) / (h * h)
    psi_q_dot = (v[0] * a[1] - v[1] * a[0]) / (v[0] ** 2 + v[1] ** 2)
    return float(theta_dot), float(psi_c_dot - psi_q_dot)


# Guarded, vectorized forms used by the planner. Inputs are (K, 3) arrays and
# every function returns values together with partial derivatives so the
# cost gradient and constraint jacobian can be assembled by the chain rule.


def guarded_pitch(q: np.ndarray, guard: float = GUARDS.horizontal_guard):
    """
    theta_C with the horizontal distance softly clamped at ``guard``.

    Returns:
        (theta (K,), d theta / d q (K, 3))
    """
    s = q[:, 0] ** 2 + q[:, 1] ** 2 + guard**2
    hs = np.sqrt(s)
    qz = q[:, 2]
    theta = np.arctan2(-hs, qz)
    denom = s + qz**2
    grad = np.empty_like(q)
    grad[:, 0] = -qz * q[:, 0] / (hs * denom)
    grad[:, 1] = -qz * q[:, 1] / (hs * denom)
    grad[:, 2] = hs / denom
    return theta, grad


def guarded_pitch_rate(q: np.ndarray, r: np.ndarray, guard: float = GUARDS.horizontal_guard):
    """
    d theta_C / dt = A / B with A = S r_z - q_z n and B = sqrt(S) (S + q_z^2),
    where S = q_x^2 + q_y^2 + guard^2 and n = q_x r_x + q_y r_y.

    Returns:
        (rate (K,), d rate / d q (K, 3), d rate / d r (K, 3))
    """
    qx, qy, qz = q[:, 0], q[:, 1], q[:, 2]
    rx, ry, rz = r[:, 0], r[:, 1], r[:, 2]
    s = qx**2 + qy**2 + guard**2
    hs = np.sqrt(s)
    n = qx * rx + qy * ry
    a_num = s * rz - qz * n
    b_den = hs * (s + qz**2)
    rate = a_num / b_den

    db_ds = (s + qz**2) / (2.0 * hs) + hs
    dq = np.empty_like(q)
    dq[:, 0] = (2.0 * qx * rz - qz * rx) / b_den - rate * db_ds * 2.0 * qx / b_den
    dq[:, 1] = (2.0 * qy * rz - qz * ry) / b_den - rate * db_ds * 2.0 * qy / b_den
    dq[:, 2] = -n / b_den - rate * (2.0 * hs * qz) / b_den
    dr = np.empty_like(r)
    dr[:, 0] = -qz * qx / b_den
    dr[:, 1] = -qz * qy / b_den
    dr[:, 2] = s / b_den
    return rate, dq, dr


def guarded_yaw_rate(
    q: np.ndarray,
    r: np.ndarray,
    v: np.ndarray,
    a: np.ndarray,
    guard: float = GUARDS.horizontal_guard,
    speed_guard: float = GUARDS.yaw_rate_speed_guard,
):
    """
    Relative yaw rate d psi_C/dt - d psi_Q/dt with both denominators guarded.

    Returns:
        (rate, d/dq, d/dr, d/dv, d/da), each derivative (K, 3)
    """
    qx, qy = q[:, 0], q[:, 1]
    rx, ry = r[:, 0], r[:, 1]
    vx, vy = v[:, 0], v[:, 1]
    ax, ay = a[:, 0], a[:, 1]
    s = qx**2 + qy**2 + guard**2
    c_num = qx * ry - qy * rx
    psi_c_dot = c_num / s
    e = vx**2 + vy**2 + speed_guard**2
    d_num = vx * ay - vy * ax
    psi_q_dot = d_num / e
    rate = psi_c_dot - psi_q_dot

    dq = np.zeros_like(q)
    dq[:, 0] = ry / s - c_num * 2.0 * qx / s**2
    dq[:, 1] = -rx / s - c_num * 2.0 * qy / s**2
    dr = np.zeros_like(r)
    dr[:, 0] = -qy / s
    dr[:, 1] = qx / s
    dv = np.zeros_like(v)
    dv[:, 0] = -(ay / e - d_num * 2.0 * vx / e**2)
    dv[:, 1] = -(-ax / e - d_num * 2.0 * vy / e**2)
    da = np.zeros_like(a)
    da[:, 0] = vy / e
    da[:, 1] = -vx / e
    return rate, dq, dr, dv, da


def guarded_yaw_cosine(
    q: np.ndarray,
    v: np.ndarray,
    center: float,
    guard: float = GUARDS.horizontal_guard,
    speed_guard: float = GUARDS.yaw_row_speed_guard,
):
    """
    Smooth surrogate of cos(rel_psi_C - center).

    The camera azimuth direction (-q_x, -q_y) and the UAV heading (v_x, v_y)
    are normalized with guarded norms, so the value shrinks toward zero
    instead of becoming undefined near the singular sets.

    Returns:
        (value (K,), d/dq (K, 3), d/dv (K, 3))
    """
    qx, qy = q[:, 0], q[:, 1]
    vx, vy = v[:, 0], v[:, 1]
    hs = np.sqrt(qx**2 + qy**2 + guard**2)
    vs = np.sqrt(vx**2 + vy**2 + speed_guard**2)
    # cos and sin of (psi_C - psi_Q) scaled by hs * vs.
    dot = -qx * vx - qy * vy
    cross = vx * (-qy) - vy * (-qx)
    cc, sc = math.cos(center), math.sin(center)
    m = dot * cc + cross * sc
    norm = hs * vs
    value = m / norm

    dq = np.zeros_like(q)
    dq[:, 0] = (-vx * cc + vy * sc) / norm - value * qx / hs**2
    dq[:, 1] = (-vy * cc - vx * sc) / norm - value * qy / hs**2
    dv = np.zeros_like(v)
    dv[:, 0] = (-qx * cc - qy * sc) / norm - value * vx / vs**2
    dv[:, 1] = (-qy * cc + qx * sc) / norm - value * vy / vs**2
    return value, dq, dv


def vee(m: np.ndarray) -> np.ndarray:
    """Map a skew-symmetric 3x3 matrix to its axial vector."""
    return np.array([m[2, 1], m[0, 2], m[1, 0]])
