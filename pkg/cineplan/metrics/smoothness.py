"""Camera smoothness metrics: jerk of the gimbal angles."""

import numpy as np
import pandas as pd

from cineplan.dynamics import wrap_angle
from cineplan.exceptions import MetricsUndefinedError
from cineplan.metrics.effort import _require

MIN_JERK_SAMPLES = 7


def third_derivative(values, dt: float, wrap: bool = False) -> np.ndarray:
    """
    Third derivative by three successive central differences.

    With ``wrap`` the first difference is wrapped to (-pi, pi], so angle
    sequences crossing the branch cut stay continuous. NaN samples
    propagate to the neighbouring estimates.

    Raises:
        MetricsUndefinedError: With fewer than 7 samples
    """
    a = np.asarray(values, dtype=float)
    if len(a) < MIN_JERK_SAMPLES:
        raise MetricsUndefinedError(f"Jerk needs at least {MIN_JERK_SAMPLES} samples, got {len(a)}")
    first = a[2:] - a[:-2]
    if wrap:
        first = wrap_angle(first)
    d1 = first / (2.0 * dt)
    d2 = (d1[2:] - d1[:-2]) / (2.0 * dt)
    return (d2[2:] - d2[:-2]) / (2.0 * dt)


def _average_abs(jerk: np.ndarray) -> float:
    if np.all(np.isnan(jerk)):
        return float("nan")
    return float(np.nanmean(np.abs(jerk)))


def AVERAGE_PITCH_JERK(df: pd.DataFrame, dt: float) -> float:
    """
    Average absolute jerk of the camera pitch angle.

    Args:
        df: Executed trajectory of one UAV, sampled every ``dt``
        dt: Sample period (s)

    Returns:
        Mean |d^3 theta_C / dt^3| (rad/s^3)
    """
    _require(df, ("theta_c",))
    return _average_abs(third_derivative(df["theta_c"].to_numpy(dtype=float), dt))


def AVERAGE_YAW_JERK(df: pd.DataFrame, dt: float) -> float:
    """
    Average absolute jerk of the camera heading angle.

    Args:
        df: Executed trajectory of one UAV, sampled every ``dt``
        dt: Sample period (s)

    Returns:
        Mean |d^3 psi_C / dt^3| (rad/s^3), differenced modulo 2 pi
    """
    _require(df, ("psi_c",))
    return _average_abs(third_derivative(df["psi_c"].to_numpy(dtype=float), dt, wrap=True))
