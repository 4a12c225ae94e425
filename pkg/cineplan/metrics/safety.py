"""Clearance and mutual-visibility metrics, computed from executed states only."""

import numpy as np
import pandas as pd

from cineplan.config import GUARDS
from cineplan.metrics.effort import _require
from cineplan.zones import NoFlyZone

_POSITION = ["px", "py", "pz"]


def _paired(df: pd.DataFrame, uav_id: str, other_id: str) -> pd.DataFrame:
    _require(df, ["time", "uav_id"] + _POSITION)
    mine = df[df["uav_id"] == uav_id]
    theirs = df[df["uav_id"] == other_id]
    return mine.merge(theirs, on="time", suffixes=("", "_other"))


def MIN_ZONE_DISTANCE(df: pd.DataFrame, zone: NoFlyZone) -> float:
    """
    Smallest distance from the executed positions to a no-fly zone.

    Args:
        df: Executed trajectory of one UAV
        zone: Zone to audit, without its planner margin

    Returns:
        Minimum exact horizontal distance to the zone boundary, 0 when inside (m)
    """
    _require(df, ("px", "py"))
    if len(df) == 0:
        return float("nan")
    dist = zone.exact_distance(df[["px", "py"]].to_numpy(dtype=float))
    return float(max(0.0, np.min(dist)))


def MIN_SEPARATION(df: pd.DataFrame, uav_id: str, horizontal: bool = False) -> float:
    """
    Smallest distance between ``uav_id`` and any other UAV at equal time stamps.

    Args:
        df: Executed trajectories of the whole team
        uav_id: UAV to audit
        horizontal: Ignore altitude differences

    Returns:
        Minimum distance (m); NaN for a single-UAV team
    """
    _require(df, ["uav_id"])
    best = float("nan")
    axes = 2 if horizontal else 3
    for other in sorted(set(df["uav_id"]) - {uav_id}):
        pairs = _paired(df, uav_id, other)
        if pairs.empty:
            continue
        a = pairs[_POSITION[:axes]].to_numpy(dtype=float)
        b = pairs[[f"{c}_other" for c in _POSITION[:axes]]].to_numpy(dtype=float)
        dist = float(np.min(np.linalg.norm(a - b, axis=1)))
        best = dist if np.isnan(best) else min(best, dist)
    return best


def MIN_VISIBILITY_MARGIN(df: pd.DataFrame, viewer_id: str, other_id: str, alpha: float) -> float:
    """
    Smallest cos(alpha) - cos(beta) of ``other_id`` in the view of ``viewer_id``.

    beta is the angle at the viewer between the camera axis (towards the
    target) and the direction to the other UAV. Negative values mean the
    other UAV entered the field-of-view cone.

    Returns:
        Minimum margin over the shared time stamps; NaN when none are usable
    """
    _require(df, ("target_px", "target_py", "target_pz"))
    pairs = _paired(df, viewer_id, other_id)
    if pairs.empty:
        return float("nan")
    p = pairs[_POSITION].to_numpy(dtype=float)
    q = p - pairs[["target_px", "target_py", "target_pz"]].to_numpy(dtype=float)
    d = p - pairs[[f"{c}_other" for c in _POSITION]].to_numpy(dtype=float)
    qn = np.linalg.norm(q, axis=1)
    dn = np.linalg.norm(d, axis=1)
    usable = (qn > GUARDS.visibility_skip) & (dn > GUARDS.visibility_skip)
    if not np.any(usable):
        return float("nan")
    cos_beta = np.einsum("ij,ij->i", q[usable], d[usable]) / (qn[usable] * dn[usable])
    return float(np.min(np.cos(alpha) - cos_beta))
