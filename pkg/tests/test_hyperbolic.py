"""Tests for the half-plane and disk primitives."""
import cmath
import math

import numpy as np
import pytest

from xp_lab.errors import DomainError
from xp_lab.hyperbolic import (EuclideanDisk, Isometry, IsometryKind, Model, ModelPoint, apply,
                               ball_intersection_envelope, dist, geodesic_midpoint, geodesic_triangle_area,
                               geodesic_triangle_area_quadrature, hyperbolic_ball_area,
                               hyperbolic_ball_area_quadrature, hyperbolic_ball_as_euclidean, isometry_compose,
                               isometry_inverse, product_dist, rotation_about, translation_length)


def _random_halfplane(rng, n):
    return [ModelPoint.halfplane(complex(rng.uniform(-2, 2), rng.uniform(0.2, 3))) for _ in range(n)]


class TestModelPoint:
    """Model validation and the Cayley map."""

    def test_cayley_sends_i_to_origin(self):
        w = ModelPoint.halfplane(1j).to(Model.DISK)
        np.testing.assert_allclose(abs(w.coord), 0.0, atol=1e-15)

    def test_round_trip(self, rng):
        for z in _random_halfplane(rng, 20):
            back = z.to(Model.DISK).to(Model.HALFPLANE)
            np.testing.assert_allclose(back.coord, z.coord, rtol=1e-12)

    def test_rejects_lower_half_plane(self):
        with pytest.raises(DomainError):
            ModelPoint.halfplane(1 - 0.5j)

    def test_rejects_disk_boundary(self):
        with pytest.raises(DomainError):
            ModelPoint.disk(1.0)


class TestDistance:
    """dist in both models."""

    def test_vertical_segment(self):
        d = dist(ModelPoint.halfplane(1j), ModelPoint.halfplane(2j))
        np.testing.assert_allclose(d, math.log(2), rtol=1e-14)

    def test_models_agree(self, rng):
        pts = _random_halfplane(rng, 10)
        for a, b in zip(pts, pts[1:]):
            np.testing.assert_allclose(dist(a, b), dist(a.to(Model.DISK), b.to(Model.DISK)), rtol=1e-10)

    def test_isometry_invariance(self, rng):
        g = Isometry((2.0, 1.0, 3.0, 2.0))
        pts = _random_halfplane(rng, 10)
        for a, b in zip(pts, pts[1:]):
            np.testing.assert_allclose(dist(apply(g, a), apply(g, b)), dist(a, b), rtol=1e-9)

    def test_product_dist_is_max(self):
        a = [ModelPoint.halfplane(1j), ModelPoint.halfplane(1j)]
        b = [ModelPoint.halfplane(2j), ModelPoint.halfplane(4j)]
        np.testing.assert_allclose(product_dist(a, b), math.log(4), rtol=1e-14)

    def test_product_dist_shape_mismatch(self):
        with pytest.raises(DomainError):
            product_dist([ModelPoint.halfplane(1j)], [])


class TestIsometry:
    """Normalization, composition and classification."""

    def test_normalized_to_unit_determinant(self):
        g = Isometry((2.0, 0.0, 0.0, 8.0))
        np.testing.assert_allclose(g.det, 1.0, rtol=1e-14)

    def test_inverse(self):
        g = Isometry((2.0, 1.0, 3.0, 2.0))
        assert g.compose(g.inverse()).is_close(Isometry.identity())
        assert isometry_compose(isometry_inverse(g), g).is_close(Isometry.identity())

    def test_compose_acts_right_to_left(self):
        g, h = Isometry((2.0, 1.0, 3.0, 2.0)), Isometry((1.0, 1.0, 0.0, 1.0))
        z = ModelPoint.halfplane(0.3 + 1.2j)
        np.testing.assert_allclose(apply(isometry_compose(g, h), z).coord, apply(g, apply(h, z)).coord,
                                   rtol=1e-12)

    def test_rotation_by_pi_about_i(self):
        rot = rotation_about(ModelPoint.halfplane(1j), math.pi)
        image = apply(rot, ModelPoint.halfplane(2j))
        np.testing.assert_allclose(image.coord, 0.5j, atol=1e-14)

    def test_rotation_by_pi_off_the_axis(self):
        rot = rotation_about(ModelPoint.halfplane(0.5 + 2j), math.pi)
        image = apply(rot, ModelPoint.halfplane(0.5 + 4j))
        np.testing.assert_allclose(image.coord, 0.5 + 1j, atol=1e-12)

    def test_rotation_fixes_centre(self, rng):
        for centre in _random_halfplane(rng, 5):
            rot = rotation_about(centre, 2 * math.pi / 7)
            np.testing.assert_allclose(dist(apply(rot, centre), centre), 0.0, atol=1e-7)
            assert rot.power(7).is_close(Isometry.identity(), tol=1e-9)

    def test_translation_length(self):
        length, kind = translation_length(Isometry((2.0, 0.0, 0.0, 0.5)))
        assert kind == IsometryKind.HYPERBOLIC
        np.testing.assert_allclose(length, 2 * math.log(2), rtol=1e-12)

    def test_parabolic_and_elliptic(self):
        assert translation_length(Isometry((1.0, 1.0, 0.0, 1.0)))[1] == IsometryKind.PARABOLIC
        assert translation_length(rotation_about(ModelPoint.halfplane(1j), 1.0))[1] == IsometryKind.ELLIPTIC

    def test_model_mismatch(self):
        with pytest.raises(DomainError):
            apply(Isometry.identity(Model.DISK), ModelPoint.halfplane(1j))


class TestBalls:
    """Balls as euclidean disks, areas and envelopes."""

    def test_euclidean_ball_boundary(self):
        centre = ModelPoint.disk(0.3 + 0.2j)
        disk = hyperbolic_ball_as_euclidean(centre, 1.0)
        for k in range(8):
            edge = disk.center + disk.radius * cmath.exp(2j * math.pi * k / 8)
            np.testing.assert_allclose(dist(centre, ModelPoint.disk(edge)), 1.0, rtol=1e-10)

    def test_euclidean_disk_contains(self):
        assert EuclideanDisk(0j, 0.5).contains(0.5)
        assert not EuclideanDisk(0j, 0.5).contains(0.6)

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
    def test_area_quadrature(self, r):
        np.testing.assert_allclose(hyperbolic_ball_area_quadrature(r), hyperbolic_ball_area(r), rtol=1e-10)

    def test_envelope_radius(self):
        a, b = ModelPoint.halfplane(1j), ModelPoint.halfplane(math.e ** 2 * 1j)
        ball = ball_intersection_envelope(a, b, 1.0, 0.5)
        np.testing.assert_allclose(ball.radius, 2 * math.atanh(math.sqrt(math.tanh(0.25))), rtol=1e-14)
        np.testing.assert_allclose(ball.center.coord, math.e * 1j, rtol=1e-10)
        disk = ball.euclidean
        assert disk == hyperbolic_ball_as_euclidean(ball.center, ball.radius)
        assert disk.contains(ball.center.to(Model.DISK).coord)

    def test_envelope_rejects_wrong_separation(self):
        with pytest.raises(DomainError):
            ball_intersection_envelope(ModelPoint.halfplane(1j), ModelPoint.halfplane(2j), 1.0, 0.5)

    def test_midpoint_is_equidistant(self, rng):
        a, b = _random_halfplane(rng, 2)
        m = geodesic_midpoint(a, b)
        np.testing.assert_allclose(dist(a, m), dist(b, m), rtol=1e-9)


class TestTriangles:
    """Gauss-Bonnet against polar quadrature."""

    def test_area_matches_quadrature(self):
        a = ModelPoint.halfplane(1j)
        b = ModelPoint.halfplane(0.5 + 2j)
        c = ModelPoint.halfplane(-0.7 + 1.5j)
        np.testing.assert_allclose(geodesic_triangle_area_quadrature(a, b, c),
                                   geodesic_triangle_area(a, b, c), rtol=1e-7)
