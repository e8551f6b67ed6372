"""Tests for cusps, CM points, Hecke operators and the triangle map."""
import cmath
import math

import numpy as np
import pytest

from xp_lab.arith import ProjMatFp, enumerate_psl2
from xp_lab.errors import DomainError, RangeError
from xp_lab.hyperbolic import ModelPoint, dist
from xp_lab.modular import (CMFlavor, CuspId, HeckeConvention, HeckeOp, c2dist_check, d_cusp_and_d_im,
                            enumerate_cm_pairs, enumerate_cm_points, enumerate_cusps, enumerate_singular_bicusps,
                            euler_characteristic, genus_and_volume, hecke_cusp_hit_counts, hecke_degree_table,
                            hecke_neighbors, hecke_on_cusps, height_bound_c2dist, height_bound_cuspdist,
                            im_height_check, im_height_trend_check, in_modular_domain, psi, reduce_modular, sigma1,
                            singular_bicusps_brute_force, triangle_map, triangle_map_inverse)
from xp_lab.report import CheckReport, Status
from xp_lab.triangle import compute_vertex_params


@pytest.fixture(scope="module")
def geom7():
    return compute_vertex_params(7)


class TestCusps:
    """Cusps as cosets of <T>."""

    @pytest.mark.parametrize("p", [5, 7, 11])
    def test_count(self, p):
        assert len(enumerate_cusps(p)) == (p * p - 1) // 2

    def test_stabilizer_order(self):
        for cusp in enumerate_cusps(7)[:5]:
            assert len(cusp.stabilizer()) == 7

    def test_identity_action(self):
        c = CuspId(7, (2, 3))
        assert c.act(ProjMatFp.identity(7)) == c

    def test_sign_normalized(self):
        assert CuspId(7, (6, 4)) == CuspId(7, (1, 3))

    def test_rejects_zero(self):
        with pytest.raises(DomainError):
            CuspId(7, (0, 0))

    @pytest.mark.parametrize("p", [5, 7])
    def test_singular_bicusps_match_brute_force(self, p):
        fast = enumerate_singular_bicusps(p)
        assert fast == singular_bicusps_brute_force(p)
        assert len(fast) == (p + 1) * ((p - 1) // 2) ** 2


class TestCMPoints:
    """Elliptic points of order 2 and 3."""

    @pytest.mark.parametrize("order", [2, 3])
    def test_count(self, order):
        assert len(enumerate_cm_points(7, order)) == len(enumerate_psl2(7)) // order

    def test_diagonal_pairs_are_heegner(self):
        for pair in enumerate_cm_pairs(7, 2):
            if pair.g_x == pair.g_y:
                assert pair.flavor == CMFlavor.HEEGNER

    def test_both_flavors_occur(self):
        flavors = {pair.flavor for pair in enumerate_cm_pairs(7, 3)}
        assert flavors == {CMFlavor.HEEGNER, CMFlavor.ANTI_HEEGNER}

    def test_rejects_order(self):
        with pytest.raises(DomainError):
            enumerate_cm_points(7, 4)


class TestHecke:
    """Degrees and the action on cusps."""

    @pytest.mark.parametrize("n, cyclic, full", [(4, 6, 7), (8, 12, 15), (9, 12, 13), (6, 12, 12)])
    def test_degrees(self, n, cyclic, full):
        assert HeckeOp(n).degree == HeckeOp(n).expected_degree == psi(n) == cyclic
        sigma = HeckeOp(n, HeckeConvention.SIGMA1)
        assert sigma.degree == sigma.expected_degree == sigma1(n) == full

    def test_degree_table(self):
        rows = hecke_degree_table(12)
        assert [r["n"] for r in rows] == list(range(1, 13))
        assert all(r["cyclic"] == psi(r["n"]) for r in rows)
        assert [r["n"] for r in rows if not r["squarefree"]] == [4, 8, 9, 12]

    def test_square_degree_hits_uniformly(self):
        hits = hecke_cusp_hit_counts(7, HeckeOp(2))
        assert len(hits) == 24
        assert set(hits.values()) == {3}

    def test_nonsquare_degree_changes_component(self):
        images = hecke_on_cusps(CuspId(7, (1, 0)), HeckeOp(3))
        assert len(images) == 4
        assert all(c.component == 1 for c in images)

    def test_index_divisible_by_p(self):
        with pytest.raises(DomainError):
            hecke_on_cusps(CuspId(7, (1, 0)), HeckeOp(7))

    def test_neighbors_of_i(self):
        i = ModelPoint.halfplane(1j)
        images = hecke_neighbors(i, HeckeOp(2))
        assert len(images) == HeckeOp(2).degree == 3
        np.testing.assert_allclose(images[-1].coord, 2j)
        np.testing.assert_allclose([dist(i, w) for w in images], [math.log(2), math.acosh(1.5), math.log(2)],
                                   rtol=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4, 6, 7, 9])
    def test_cusp_action_is_equivariant(self, n):
        T = HeckeOp(n)
        cusps = [CuspId(5, c.vector, component) for c in enumerate_cusps(5) for component in (0, 1)]
        for g in enumerate_psl2(5):
            for c in cusps:
                moved = sorted(hecke_on_cusps(c.act(g), T))
                assert moved == sorted(h.act(g) for h in hecke_on_cusps(c, T))

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6, 7, 8, 9, 10])
    def test_neighbor_counts(self, n):
        z = ModelPoint.halfplane(complex(0.3, 1.7))
        assert len(hecke_neighbors(z, HeckeOp(n))) == psi(n)
        assert len(hecke_neighbors(z, HeckeOp(n, HeckeConvention.SIGMA1))) == sigma1(n)
        if n in (4, 8, 9):
            assert psi(n) < sigma1(n)
        else:
            assert psi(n) == sigma1(n)


class TestModularReduction:
    def test_round_trip(self, rng):
        for _ in range(20):
            z = complex(rng.uniform(-4, 4), rng.uniform(0.01, 2))
            gamma, z1 = reduce_modular(z)
            assert in_modular_domain(z1, tol=1e-9)
            np.testing.assert_allclose(gamma.act(z1), z, rtol=1e-9)

    def test_rejects_real_axis(self):
        with pytest.raises(DomainError):
            reduce_modular(complex(0.3, 0.0))


class TestTriangleMap:
    """The conformal map from the modular domain onto F."""

    def test_fixes_i(self, geom7):
        w = triangle_map(ModelPoint.halfplane(1j), geom7)
        np.testing.assert_allclose(w.coord, 1j, atol=1e-9)

    def test_order3_vertex(self, geom7):
        w = triangle_map(ModelPoint.halfplane(cmath.exp(2j * math.pi / 3) + 1e-9j), geom7)
        np.testing.assert_allclose(w.coord, geom7.mirror_vertex.coord, atol=1e-6)

    def test_inverse_round_trip(self, geom7):
        z = complex(-0.2, 1.5)
        w = triangle_map(ModelPoint.halfplane(z), geom7)
        back = triangle_map_inverse(w, geom7)
        np.testing.assert_allclose(back.coord, z, rtol=1e-7)

    def test_rejects_outside_domain(self, geom7):
        with pytest.raises(DomainError):
            triangle_map(ModelPoint.halfplane(0.8 + 0.3j), geom7)

    def test_d_im_reads_back_the_height(self, geom7):
        w = triangle_map(ModelPoint.halfplane(complex(0.1, 3.0)), geom7)
        d_cusp, d_im = d_cusp_and_d_im(w, geom7)
        assert d_cusp > 0
        np.testing.assert_allclose(d_im, 3.0, rtol=1e-6)

    def test_d_im_at_the_cusp_vertex(self, geom7):
        assert d_cusp_and_d_im(geom7.cusp_vertex, geom7) == (0.0, math.inf)

    def test_im_height_trend(self):
        def fitted(p, c):
            return CheckReport.passed(f"modular.im_height.p{p}", detail={"p": p, "fitted": c})
        assert im_height_trend_check([fitted(13, 0.5), fitted(7, 3.0)]).status == Status.PASS
        report = im_height_trend_check([fitted(7, 0.5), fitted(13, 3.0)])
        assert report.status == Status.FAIL
        assert report.witness["p"] == [7, 13]

    @pytest.mark.slow
    def test_im_height_does_not_grow_with_p(self, geom7):
        reports = [im_height_check(geom7), im_height_check(compute_vertex_params(13))]
        assert [r.status for r in reports] == [Status.PASS, Status.PASS]
        assert all(r.detail["samples"] >= 200 for r in reports)
        assert im_height_trend_check(reports).status == Status.PASS


class TestHeights:
    def test_bound(self):
        assert height_bound_c2dist(0.0) == 2.0
        np.testing.assert_allclose(height_bound_cuspdist(7, 0.1, offset=0.0), 2 * 7 ** 0.2, rtol=1e-12)

    def test_c2dist(self, geom7):
        assert c2dist_check(geom7, 1.0).status == Status.PASS

    def test_c2dist_guard(self, geom7):
        with pytest.raises(RangeError):
            c2dist_check(geom7, 3.0)


class TestGenus:
    """Riemann-Hurwitz against the closed formula."""

    @pytest.mark.parametrize("p, genus", [(5, 0), (7, 3), (11, 26), (13, 50)])
    def test_genus(self, p, genus):
        g, volume = genus_and_volume(p)
        assert g == genus
        assert 2 - 2 * g == euler_characteristic(p)
        np.testing.assert_allclose(volume, p * (p * p - 1) / 2 * 2 * math.pi * (1 / 6 - 1 / p), rtol=1e-12)
