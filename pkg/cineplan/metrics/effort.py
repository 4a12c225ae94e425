"""Control effort and distance metrics of executed trajectories."""

import numpy as np
import pandas as pd


def _require(df: pd.DataFrame, columns) -> None:
    for column in columns:
        if column not in df.columns:
            raise ValueError(f"Column '{column}' not found in DataFrame")


def AVERAGE_ACCELERATION(df: pd.DataFrame) -> float:
    """
    Average norm of the commanded acceleration.

    Args:
        df: Executed trajectory of one UAV

    Returns:
        Mean of ||(ux, uy, uz)|| over all samples (m/s^2)
    """
    _require(df, ("ux", "uy", "uz"))
    if len(df) == 0:
        return float("nan")
    norms = np.linalg.norm(df[["ux", "uy", "uz"]].to_numpy(dtype=float), axis=1)
    return float(np.mean(norms))


def AVERAGE_ACTUAL_ACCELERATION(df: pd.DataFrame, dt: float) -> float:
    """
    Average norm of the acceleration the vehicle actually had.

    Velocities are differenced between consecutive samples, so this
    includes the velocity-loop response on top of the planned inputs.
    """
    _require(df, ("vx", "vy", "vz"))
    if len(df) < 2:
        return float("nan")
    dv = np.diff(df[["vx", "vy", "vz"]].to_numpy(dtype=float), axis=0) / dt
    return float(np.mean(np.linalg.norm(dv, axis=1)))


def TRAVELED_DISTANCE(df: pd.DataFrame) -> float:
    """Length of the executed polyline (m)."""
    _require(df, ("px", "py", "pz"))
    if len(df) < 2:
        return 0.0
    steps = np.diff(df[["px", "py", "pz"]].to_numpy(dtype=float), axis=0)
    return float(np.sum(np.linalg.norm(steps, axis=1)))
