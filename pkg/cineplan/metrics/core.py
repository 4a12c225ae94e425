"""Core trajectory metrics interface."""

import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, Optional

import numpy as np
import pandas as pd

from cineplan.exceptions import MetricsUndefinedError
from cineplan.metrics.effort import (
    AVERAGE_ACCELERATION,
    AVERAGE_ACTUAL_ACCELERATION,
    TRAVELED_DISTANCE,
)
from cineplan.metrics.safety import MIN_SEPARATION, MIN_VISIBILITY_MARGIN, MIN_ZONE_DISTANCE
from cineplan.metrics.smoothness import AVERAGE_PITCH_JERK, AVERAGE_YAW_JERK

if TYPE_CHECKING:
    from cineplan.scenario import Scenario


class TrajectoryMetrics:
    """Main interface for computing metrics of executed trajectories."""

    def __init__(self, dataframe: pd.DataFrame, dt: float):
        """
        Initialize with the executed trajectories of a run.

        Args:
            dataframe: One row per UAV and time step, as written to trajectories.csv
            dt: Sample period of the rows (s)
        """
        if not isinstance(dataframe, pd.DataFrame):
            raise TypeError("Input must be a pandas DataFrame")
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.df = dataframe.sort_values(["uav_id", "time"], kind="stable").reset_index(drop=True)
        self.dt = float(dt)

    def uav_frame(self, uav_id: str) -> pd.DataFrame:
        frame = self.df[self.df["uav_id"] == uav_id]
        if frame.empty:
            raise ValueError(f"No samples for UAV '{uav_id}'")
        return frame

    def compute_metric(self, metric_name: str, uav_id: Optional[str] = None, **kwargs) -> float:
        """
        Compute one metric.

        Args:
            metric_name: Name of the metric (e.g. 'AVERAGE_ACCELERATION')
            uav_id: UAV the metric is about
            **kwargs: ``zone`` for MIN_ZONE_DISTANCE; ``other`` and ``alpha``
                for MIN_VISIBILITY_MARGIN

        Raises:
            ValueError: If the metric name is unknown or a parameter is missing
            MetricsUndefinedError: If a jerk is requested on fewer than 7 samples
        """
        metric_map = {
            # Effort
            "AVERAGE_ACCELERATION": lambda: AVERAGE_ACCELERATION(self.uav_frame(uav_id)),
            "AVERAGE_ACTUAL_ACCELERATION": lambda: AVERAGE_ACTUAL_ACCELERATION(
                self.uav_frame(uav_id), self.dt
            ),
            "TRAVELED_DISTANCE": lambda: TRAVELED_DISTANCE(self.uav_frame(uav_id)),
            # Smoothness
            "AVERAGE_PITCH_JERK": lambda: AVERAGE_PITCH_JERK(self.uav_frame(uav_id), self.dt),
            "AVERAGE_YAW_JERK": lambda: AVERAGE_YAW_JERK(self.uav_frame(uav_id), self.dt),
            # Safety
            "MIN_ZONE_DISTANCE": lambda: MIN_ZONE_DISTANCE(self.uav_frame(uav_id), kwargs["zone"]),
            "MIN_SEPARATION": lambda: MIN_SEPARATION(self.df, uav_id),
            "MIN_HORIZONTAL_SEPARATION": lambda: MIN_SEPARATION(self.df, uav_id, horizontal=True),
            "MIN_VISIBILITY_MARGIN": lambda: MIN_VISIBILITY_MARGIN(
                self.df, uav_id, kwargs["other"], kwargs["alpha"]
            ),
        }

        if metric_name not in metric_map:
            raise ValueError(f"Unknown metric: {metric_name}")
        if uav_id is None:
            raise ValueError(f"{metric_name} needs a uav_id")
        try:
            return metric_map[metric_name]()
        except KeyError as exc:
            raise ValueError(f"{metric_name} needs the '{exc.args[0]}' parameter") from None

    def compute_all_metrics(self, uav_id: str, strict: bool = True) -> Dict[str, float]:
        """
        Effort, smoothness and separation metrics of one UAV.

        With ``strict`` False, jerks of too-short runs are reported as NaN
        instead of raising.
        """
        out = {
            "avg_acceleration": self.compute_metric("AVERAGE_ACCELERATION", uav_id),
            "avg_actual_acceleration": self.compute_metric("AVERAGE_ACTUAL_ACCELERATION", uav_id),
        }
        jerks = (("avg_yaw_jerk", "AVERAGE_YAW_JERK"), ("avg_pitch_jerk", "AVERAGE_PITCH_JERK"))
        for key, name in jerks:
            try:
                out[key] = self.compute_metric(name, uav_id)
            except MetricsUndefinedError:
                if strict:
                    raise
                out[key] = float("nan")
        out["traveled_distance"] = self.compute_metric("TRAVELED_DISTANCE", uav_id)
        out["min_uav_distance"] = self.compute_metric("MIN_SEPARATION", uav_id)
        out["min_horizontal_uav_distance"] = self.compute_metric(
            "MIN_HORIZONTAL_SEPARATION", uav_id
        )
        return out


def _clean(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) else float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


@dataclass
class MetricsReport:
    """
    Metrics of one run.

    Attributes:
        uavs: Per-UAV metrics keyed by UAV id
        pairs: Minimum visibility margin keyed by "viewer->other"
        min_pairwise_distance: Smallest 3D distance between any two UAVs (m)
        min_horizontal_distance: Smallest horizontal distance between any two UAVs (m)
    """

    uavs: Dict[str, Dict[str, float]] = field(default_factory=dict)
    pairs: Dict[str, float] = field(default_factory=dict)
    min_pairwise_distance: float = float("nan")
    min_horizontal_distance: float = float("nan")

    def to_dict(self) -> Dict[str, Any]:
        """JSON-ready view; NaN becomes None."""
        return _clean(
            {
                "uavs": self.uavs,
                "pairs": self.pairs,
                "min_pairwise_distance": self.min_pairwise_distance,
                "min_horizontal_distance": self.min_horizontal_distance,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def flat(self) -> Dict[str, float]:
        """Single-level mapping, e.g. ``uav1.avg_pitch_jerk``, used for sweep tables."""
        row = {
            "min_pairwise_distance": self.min_pairwise_distance,
            "min_horizontal_distance": self.min_horizontal_distance,
        }
        for uav_id in sorted(self.uavs):
            for key, value in self.uavs[uav_id].items():
                row[f"{uav_id}.{key}"] = value
        for pair in sorted(self.pairs):
            row[f"visibility_margin.{pair}"] = self.pairs[pair]
        return row


def _min_ignoring_nan(values) -> float:
    finite = [v for v in values if not math.isnan(v)]
    return min(finite) if finite else float("nan")


def compute_metrics(
    trajectories: pd.DataFrame,
    scenario: "Scenario",
    events: Optional[pd.DataFrame] = None,
    strict: bool = True,
) -> MetricsReport:
    """
    Metrics report of executed trajectories sampled at ``scenario.dt``.

    Accelerations are the commanded inputs of the executed plans. Distances
    come from executed states and the exact zone shapes. Solve statistics
    are read from ``events`` when given.

    Raises:
        MetricsUndefinedError: If ``strict`` and a UAV has fewer than 7 samples
    """
    metrics = TrajectoryMetrics(trajectories, scenario.dt)
    report = MetricsReport()
    for spec in scenario.uavs:
        uav_id = spec.uav_id
        values = metrics.compute_all_metrics(uav_id, strict=strict)
        for i, zone in enumerate(scenario.nofly):
            values[f"min_distance_zone{i}"] = metrics.compute_metric(
                "MIN_ZONE_DISTANCE", uav_id, zone=zone
            )
        if events is not None:
            mine = events[events["uav_id"] == uav_id]
            wall = mine["wall_time"].to_numpy(dtype=float)
            values["avg_solve_time"] = float(np.mean(wall)) if len(wall) else float("nan")
            values["max_solve_time"] = float(np.max(wall)) if len(wall) else float("nan")
            values["solves"] = int(len(mine))
            values["fallbacks"] = int((~mine["accepted"].astype(bool)).sum())
        report.uavs[uav_id] = values

        if spec.visibility:
            for other in scenario.uavs:
                if other.uav_id != uav_id:
                    report.pairs[f"{uav_id}->{other.uav_id}"] = metrics.compute_metric(
                        "MIN_VISIBILITY_MARGIN", uav_id, other=other.uav_id, alpha=spec.bounds.alpha
                    )

    report.min_pairwise_distance = _min_ignoring_nan(
        v["min_uav_distance"] for v in report.uavs.values()
    )
    report.min_horizontal_distance = _min_ignoring_nan(
        v["min_horizontal_uav_distance"] for v in report.uavs.values()
    )
    return report
