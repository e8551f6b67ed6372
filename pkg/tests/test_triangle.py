"""Tests for the (2,3,p) triangle, its tiles and the map to PSL2(F_p)."""
import math

import numpy as np
import pytest

from xp_lab.arith import IntMat, psl2_order
from xp_lab.errors import DomainError, RangeError
from xp_lab.hyperbolic import ModelPoint, dist
from xp_lab.report import Status
from xp_lab.triangle import (TileWord, compute_vertex_params, cusp_lift_separation, dist_on_Xp,
                             fixes_cusp_vertex, fp_homomorphism, gamma_p_of_intmat, image_closure,
                             in_fundamental_domain, psl2_surjective, reduce_to_fundamental, relation_defects,
                             tile_ball, triangle_angles, triangle_area, verify_disksep)


@pytest.fixture(scope="module")
def geom7():
    return compute_vertex_params(7)


class TestVertexParams:
    """The triangle (i, iy_p, e^{i theta_p})."""

    @pytest.mark.parametrize("p", [7, 11, 13])
    def test_cusp_height(self, p):
        geom = compute_vertex_params(p)
        np.testing.assert_allclose(math.cosh(math.log(geom.y_p)) * math.sin(math.pi / p), 0.5, atol=1e-12)

    def test_large_p_asymptotics(self):
        geom = compute_vertex_params(101)
        np.testing.assert_allclose(geom.y_p * math.pi / 101, 1.0, rtol=1e-2)
        np.testing.assert_allclose(geom.theta_p, math.pi / 3, atol=1e-2)

    def test_p5_is_spherical(self):
        with pytest.raises(DomainError):
            compute_vertex_params(5)

    def test_rejects_non_prime(self):
        with pytest.raises(DomainError):
            compute_vertex_params(9)

    def test_angles(self, geom7):
        np.testing.assert_allclose(triangle_angles(geom7), (math.pi / 2, math.pi / 7, math.pi / 3), atol=1e-10)

    def test_area(self, geom7):
        np.testing.assert_allclose(triangle_area(geom7), math.pi * (1 / 6 - 1 / 7), rtol=1e-10)

    def test_relations(self, geom7):
        assert max(relation_defects(geom7).values()) < 1e-9


class TestFpImage:
    """sigma_2 -> S, sigma_p -> T and surjectivity."""

    @pytest.mark.parametrize("p", [5, 7, 11])
    def test_surjective(self, p):
        assert image_closure(p) == psl2_order(p)
        assert psl2_surjective(p)

    def test_generator_images(self):
        images = fp_homomorphism(7)
        assert images["S"].order() == 2
        assert images["R"].order() == 3
        assert images["P"].order() == 7

    @pytest.mark.parametrize("M", [IntMat(1, 1, 0, 1), IntMat(0, -1, 1, 0), IntMat(2, 1, 1, 1),
                                   IntMat(3, 2, 4, 3), IntMat(-5, 2, 2, -1)])
    def test_word_reduces_to_matrix(self, geom7, M):
        tile = gamma_p_of_intmat(M, geom7)
        assert tile.fp_image == M.proj(7)


class TestReduction:
    """Point reduction into F."""

    def test_reduction_round_trip(self, geom7, rng):
        for _ in range(20):
            z = ModelPoint.halfplane(complex(rng.uniform(-3, 3), rng.uniform(0.1, 5)))
            word, z0 = reduce_to_fundamental(geom7, z)
            assert in_fundamental_domain(geom7, z0.coord, tol=1e-9)
            assert dist(word.apply(z0), z) < 1e-6

    def test_interior_point_is_in_F(self, geom7):
        word, _ = reduce_to_fundamental(geom7, geom7.interior_point)
        assert len(word) == 0


class TestTileBall:
    """Tiles meeting hyperbolic balls."""

    def test_star_of_the_cusp_vertex(self, geom7):
        tiles = tile_ball(geom7, geom7.cusp_vertex, 0.05)
        assert len(tiles) == 7
        assert all(fixes_cusp_vertex(t, geom7) for t in tiles)

    def test_contains_identity(self, geom7):
        tiles = tile_ball(geom7, geom7.interior_point, 0.5)
        assert any(len(t) == 0 for t in tiles)

    def test_monotone_in_radius(self, geom7):
        small = tile_ball(geom7, geom7.i_vertex, 0.5)
        large = tile_ball(geom7, geom7.i_vertex, 1.5)
        assert len(small) < len(large)

    def test_radius_guards(self, geom7):
        with pytest.raises(DomainError):
            tile_ball(geom7, geom7.i_vertex, -0.1)
        with pytest.raises(RangeError):
            tile_ball(geom7, geom7.i_vertex, 3 * math.log(7) + 0.1)

    def test_identity_tile_word(self, geom7):
        e = TileWord.identity(geom7)
        assert dist(e.apply(geom7.i_vertex), geom7.i_vertex) < 1e-14


class TestDistances:
    """Distances on X(p) and the disk separation at the cusp vertex."""

    def test_point_to_itself(self, geom7):
        assert dist_on_Xp(geom7, geom7.i_vertex, geom7.i_vertex, 1.0) < 1e-12

    def test_disksep(self, geom7):
        report = verify_disksep(geom7)
        assert report.status == Status.PASS
        separation = report.detail["cusp_separation"]
        assert separation > 0
        np.testing.assert_allclose(report.detail["stated_margin"], separation - (2 * math.log(7) - 2), rtol=1e-12)

    @pytest.mark.slow
    def test_cusp_separation_grows(self):
        seps = [cusp_lift_separation(compute_vertex_params(p)) for p in (7, 11)]
        assert seps[0] < seps[1]
