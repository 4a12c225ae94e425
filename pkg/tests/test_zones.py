"""Tests for no-fly zones."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cineplan.validation import central_difference, relative_error
from cineplan.zones import CircleZone, PolygonZone

SQUARE = [[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]
coordinate = st.floats(min_value=-4.0, max_value=6.0)
point = st.tuples(coordinate, coordinate)


class TestCircleZone:
    def test_exact_distance(self):
        zone = CircleZone([1.0, 1.0], 2.0)
        distances = zone.exact_distance(np.array([[4.0, 1.0], [1.0, 1.5]]))
        np.testing.assert_allclose(distances, [1.0, -1.5])

    def test_contains(self):
        zone = CircleZone([0.0, 0.0], 1.0)
        assert zone.contains([0.5, 0.5])
        assert not zone.contains([1.0, 1.0])

    def test_smooth_equals_exact(self):
        zone = CircleZone([0.0, 0.0], 1.0)
        xy = np.array([[3.0, 4.0]])
        value, grad = zone.smooth_distance(xy)
        assert value[0] == pytest.approx(4.0)
        np.testing.assert_allclose(grad[0], [0.6, 0.8])

    def test_centre_has_zero_gradient(self):
        _, grad = CircleZone([0.0, 0.0], 1.0).smooth_distance(np.array([[0.0, 0.0]]))
        np.testing.assert_allclose(grad, [[0.0, 0.0]])

    def test_invalid_radius(self):
        with pytest.raises(ValueError):
            CircleZone([0.0, 0.0], 0.0)

    def test_default_margin(self):
        assert CircleZone([0.0, 0.0], 1.0).margin == pytest.approx(0.3)


class TestPolygonZone:
    def test_exact_distance(self):
        zone = PolygonZone(SQUARE)
        np.testing.assert_allclose(
            zone.exact_distance(np.array([[3.0, 1.0], [1.0, 1.0], [3.0, 3.0]])),
            [1.0, -1.0, np.sqrt(2.0)],
        )

    def test_clockwise_vertices_accepted(self):
        zone = PolygonZone(SQUARE[::-1])
        assert zone.contains([1.0, 1.0])
        assert zone.smooth_distance(np.array([[5.0, 1.0]]))[0][0] == pytest.approx(3.0, abs=0.1)

    @settings(max_examples=100)
    @given(point)
    def test_smooth_never_exceeds_exact(self, xy):
        zone = PolygonZone(SQUARE)
        xy = np.array([xy])
        assert zone.smooth_distance(xy)[0][0] <= zone.exact_distance(xy)[0] + 1e-9

    def test_gradient(self):
        zone = PolygonZone(SQUARE)
        for xy in ([3.0, 1.0], [2.1, 2.2], [1.0, 0.5], [-1.0, 3.0]):
            _, grad = zone.smooth_distance(np.array([xy]))
            numeric = central_difference(
                lambda w: zone.smooth_distance(w.reshape(1, 2))[0][0], np.array(xy)
            )
            assert relative_error(grad[0], numeric) <= 1e-6

    def test_non_convex_rejected(self):
        with pytest.raises(ValueError):
            PolygonZone([[0, 0], [4, 0], [4, 4], [2, 1], [0, 4]])

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            PolygonZone([[0, 0], [1, 1], [2, 2]])
