"""
No-fly zones: vertical prisms over a circle or a convex polygon.

Each zone offers a smooth signed distance for the planner and an exact
distance for auditing executed trajectories.
"""

from abc import ABC, abstractmethod
from typing import Sequence, Tuple

import numpy as np
from scipy.special import logsumexp, softmax
from shapely.geometry import Point, Polygon
from shapely.geometry.polygon import orient

from cineplan.config import DEFAULT_ZONE_MARGIN, GUARDS


class NoFlyZone(ABC):
    """Forbidden region of unbounded height; ``margin`` inflates it inside the planner only."""

    margin: float

    @abstractmethod
    def smooth_distance(self, xy: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Smooth signed distance of (K, 2) points and its (K, 2) gradient."""

    @abstractmethod
    def exact_distance(self, xy: np.ndarray) -> np.ndarray:
        """Signed Euclidean distance to the boundary, negative inside."""

    def contains(self, xy: Sequence[float]) -> bool:
        return bool(self.exact_distance(np.asarray(xy, dtype=float).reshape(1, 2))[0] < 0.0)


class CircleZone(NoFlyZone):
    def __init__(self, center: Sequence[float], radius: float, margin: float = DEFAULT_ZONE_MARGIN):
        self.center = np.asarray(center, dtype=float).reshape(2)
        if not radius > 0:
            raise ValueError(f"Zone radius must be positive, got {radius}")
        if margin < 0:
            raise ValueError(f"Zone margin must be non-negative, got {margin}")
        self.radius = float(radius)
        self.margin = float(margin)

    def __repr__(self) -> str:
        return f"CircleZone(center={self.center.tolist()}, radius={self.radius})"

    def smooth_distance(self, xy):
        diff = xy - self.center
        norm = np.hypot(diff[:, 0], diff[:, 1])
        safe = np.where(norm > 0, norm, 1.0)
        grad = np.where(norm[:, None] > 0, diff / safe[:, None], 0.0)
        return norm - self.radius, grad

    def exact_distance(self, xy):
        diff = np.asarray(xy, dtype=float) - self.center
        return np.hypot(diff[:, 0], diff[:, 1]) - self.radius


class PolygonZone(NoFlyZone):
    """
    Convex polygon zone.

    The smooth distance is a log-sum-exp of the edge half-plane distances,
    shifted down by log(m)/s so that it never exceeds the true distance.
    """

    def __init__(
        self,
        vertices: Sequence[Sequence[float]],
        margin: float = DEFAULT_ZONE_MARGIN,
        sharpness: float = GUARDS.polygon_sharpness,
    ):
        poly = Polygon(vertices)
        if not poly.is_valid or poly.area <= 0.0:
            raise ValueError("Polygon zone is degenerate or self-intersecting")
        if not np.isclose(poly.convex_hull.area, poly.area, rtol=1e-9):
            raise ValueError("Polygon zone must be convex")
        if margin < 0:
            raise ValueError(f"Zone margin must be non-negative, got {margin}")
        self.polygon = orient(poly, sign=1.0)
        self.margin = float(margin)
        self.sharpness = float(sharpness)

        pts = np.asarray(self.polygon.exterior.coords)[:-1]
        edges = np.roll(pts, -1, axis=0) - pts
        lengths = np.hypot(edges[:, 0], edges[:, 1])
        # Counter-clockwise orientation puts the outward normal on the right.
        self.normals = np.column_stack([edges[:, 1], -edges[:, 0]]) / lengths[:, None]
        self.offsets = np.einsum("ij,ij->i", self.normals, pts)
        self.vertices = pts

    def __repr__(self) -> str:
        return f"PolygonZone(vertices={self.vertices.tolist()})"

    def smooth_distance(self, xy):
        s = self.sharpness
        d = xy @ self.normals.T - self.offsets
        m = d.shape[1]
        value = logsumexp(s * d, axis=1) / s - np.log(m) / s
        grad = softmax(s * d, axis=1) @ self.normals
        return value, grad

    def exact_distance(self, xy):
        xy = np.asarray(xy, dtype=float)
        out = np.empty(len(xy))
        boundary = self.polygon.exterior
        for i, (x, y) in enumerate(xy):
            pt = Point(x, y)
            dist = boundary.distance(pt)
            out[i] = -dist if self.polygon.contains(pt) else dist
        return out
