"""Trajectory metrics module."""

from cineplan.metrics.core import MetricsReport, TrajectoryMetrics, compute_metrics

__all__ = ["MetricsReport", "TrajectoryMetrics", "compute_metrics"]
