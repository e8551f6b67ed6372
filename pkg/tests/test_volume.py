"""Tests for curve volumes in the bidisk and the radial profiles."""
import json
import math

import numpy as np
import pytest

from xp_lab.errors import DomainError, PreconditionError, StructuralError
from xp_lab.hyperbolic import EuclideanDisk, hyperbolic_ball_area
from xp_lab.report import Status
from xp_lab.volume import (CurvePatch, Diag2Patch, DiskMap, IDENTITY_MAP, MapKind, PatchKind, ProfileKind,
                           RadialProfile, RegionKind, RegionSpec, builtin_patches, coincidence_points, collar_area,
                           collar_tightness_check, collar_volume, current_identity_check, curve_volume, disk_distance,
                           ht_conj_point_check, ht_diag2_check, ht_diag_check, ht_point_check, htad_ratio_check,
                           htd_ratio_check, lelong_estimate, profile_positivity_check)


class TestDiskMaps:
    """Coordinate maps and their coincidences."""

    def test_disk_distance(self):
        np.testing.assert_allclose(disk_distance(0j, 0.5 + 0j), math.log(3), rtol=1e-14)

    def test_const_outside_disk(self):
        with pytest.raises(DomainError):
            DiskMap(MapKind.CONST, (1.2,))

    def test_mobius_normalized(self):
        f = DiskMap(MapKind.MOBIUS, (2.0, 1.0))
        a, b = f.params
        np.testing.assert_allclose(abs(a) ** 2 - abs(b) ** 2, 1.0, rtol=1e-14)

    def test_wrong_parameter_count(self):
        with pytest.raises(DomainError):
            DiskMap(MapKind.NEG, (1.0,))

    def test_coincidences(self):
        domain = EuclideanDisk(0j, 0.9)
        points = coincidence_points(DiskMap(MapKind.NEG), IDENTITY_MAP, domain)
        assert [k for _, k in points] == [1]
        assert abs(points[0][0]) < 1e-12
        points = coincidence_points(DiskMap(MapKind.POLY, (0, 0, 0.5)), IDENTITY_MAP, domain)
        assert len(points) == 1
        assert abs(points[0][0]) < 1e-9 and points[0][1] == 1

    def test_identical_maps(self):
        with pytest.raises(PreconditionError):
            coincidence_points(IDENTITY_MAP, IDENTITY_MAP, EuclideanDisk(0j, 0.5))

    def test_declared_multiplicity_checked(self):
        patch = CurvePatch.poly((0, 0, 0.5), multiplicities=((0j, 2),))
        with pytest.raises(StructuralError):
            patch.validate_multiplicities()

    def test_domain_must_stay_in_disk(self):
        with pytest.raises(DomainError):
            CurvePatch.neg(EuclideanDisk(0.5 + 0j, 0.6))


class TestRegions:
    def test_radius_positive(self):
        with pytest.raises(DomainError):
            RegionSpec(RegionKind.DIAG_TUBE, 0.0)

    def test_ball_needs_anchor(self):
        with pytest.raises(DomainError):
            RegionSpec(RegionKind.POINT_BALL, 1.0)

    def test_tolerance_positive(self):
        with pytest.raises(DomainError):
            curve_volume(CurvePatch.neg(), RegionSpec(RegionKind.DIAG_TUBE, 1.0), tol=0.0)

    def test_specs_rebuild_from_json(self):
        patch = CurvePatch(PatchKind.GRAPH_NEG, (), EuclideanDisk(0.1 + 0.2j, 0.5), ((0j, 1),))
        assert CurvePatch.from_dict(json.loads(json.dumps(patch.to_dict()))) == patch
        ball = RegionSpec(RegionKind.POINT_BALL, 0.75, (0.1 + 0.2j, -0.3j))
        assert RegionSpec.from_dict(json.loads(json.dumps(ball.to_dict()))) == ball


class TestExtremalCases:
    """Horizontal slices and the antidiagonal realize the lower bounds exactly."""

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
    def test_point_bound_equality(self, r):
        report = ht_point_check(CurvePatch.const(0.2), (0j, 0.2 + 0j), r)
        assert report.status == Status.PASS
        np.testing.assert_allclose(report.lhs, hyperbolic_ball_area(r), rtol=1e-6)

    @pytest.mark.parametrize("r", [0.5, 1.0, 2.0])
    def test_diagonal_bound_equality(self, r):
        report = ht_diag_check(CurvePatch.neg(), r)
        assert report.status == Status.PASS
        np.testing.assert_allclose(report.lhs, 8 * math.pi * math.sinh(r / 4) ** 2, rtol=1e-6)

    def test_conjugate_point(self):
        report = ht_conj_point_check(CurvePatch.conj_model(1, 0), (0.1 + 0j, 0.1 + 0j), 1.0)
        assert report.status == Status.PASS
        np.testing.assert_allclose(report.lhs, 2 * hyperbolic_ball_area(1.0), rtol=1e-6)

    def test_double_diagonal(self):
        curve = Diag2Patch((DiskMap(MapKind.IDENTITY), DiskMap(MapKind.IDENTITY),
                            DiskMap(MapKind.NEG), DiskMap(MapKind.CONST, (0,))))
        report = ht_diag2_check(curve, 1.0)
        assert report.status == Status.PASS
        assert report.detail["mult"] == 1

    def test_curve_inside_double_diagonal(self):
        inside = Diag2Patch((IDENTITY_MAP,) * 4)
        with pytest.raises(PreconditionError):
            ht_diag2_check(inside, 1.0)

    def test_conjugate_point_needs_conjugate_patch(self):
        with pytest.raises(PreconditionError):
            ht_conj_point_check(CurvePatch.neg(), (0j, 0j), 1.0)


class TestGrowthRatios:
    """vol(R)/vol(r) against the cosh and sinh ratios."""

    @pytest.mark.parametrize("index", range(5))
    def test_diagonal_family(self, index):
        patch = builtin_patches(RegionKind.DIAG_TUBE)[index]
        assert htd_ratio_check(patch, 0.5, 2.0).status == Status.PASS

    @pytest.mark.parametrize("index", range(3))
    def test_conjugate_family(self, index):
        patch = builtin_patches(RegionKind.CONJ_DIAG_TUBE)[index]
        assert htad_ratio_check(patch, 0.5, 2.0).status == Status.PASS

    def test_conjugate_diagonal_rejected(self):
        with pytest.raises(PreconditionError):
            htad_ratio_check(CurvePatch.conj_model(1, 0), 0.5, 2.0)

    def test_radii_order(self):
        with pytest.raises(DomainError):
            htd_ratio_check(CurvePatch.neg(), 2.0, 0.5)

    def test_no_family_for_point_balls(self):
        with pytest.raises(DomainError):
            builtin_patches(RegionKind.POINT_BALL)


class TestCollar:
    """The identity graph in the conjugate-diagonal tube."""

    def test_collar_volume(self):
        np.testing.assert_allclose(collar_volume(1.0), 2 * collar_area(0.5, 1.0), rtol=1e-4)

    def test_tightness(self):
        report = collar_tightness_check(0.5, 2.0)
        assert report.status == Status.PASS
        np.testing.assert_allclose(report.lhs, math.sinh(1.0) / math.sinh(0.25), rtol=1e-4)


class TestProfiles:
    """Radial profiles for the two growth bounds."""

    @pytest.mark.parametrize("kind", list(ProfileKind))
    @pytest.mark.parametrize("r, R", [(0.5, 2.0), (0.25, 3.0), (1.0, 1.5)])
    def test_positivity(self, kind, r, R):
        assert profile_positivity_check(RadialProfile(kind, r, R), grid=2_000).status == Status.PASS

    @pytest.mark.parametrize("kind", list(ProfileKind))
    def test_junctions_are_smooth(self, kind):
        low, high = RadialProfile(kind, 0.5, 2.0).junction_defects()
        assert low < 1e-10
        assert high < 1e-10

    def test_htd_signs(self):
        profile = RadialProfile(ProfileKind.HTD, 0.5, 2.0)
        assert profile.A < 0
        assert profile.B > 1

    def test_rejects_reversed_radii(self):
        with pytest.raises(DomainError):
            RadialProfile(ProfileKind.HTAD, 2.0, 1.0)


class TestLelong:
    """Pole order of plurisubharmonic potentials."""

    @pytest.mark.parametrize("m", [1.0, 2.0, 3.0])
    def test_log_singularity(self, m):
        x = complex(0.2, -0.1)
        est = lelong_estimate(lambda z: m * math.log(abs(z - x)), x)
        np.testing.assert_allclose(est.value, m, rtol=1e-6)

    def test_smooth_potential_has_zero_number(self):
        est = lelong_estimate(lambda z: abs(z) ** 2, complex(0.3, 0.0))
        assert abs(est.value) < 1e-3

    def test_non_finite_potential(self):
        with pytest.raises(DomainError):
            lelong_estimate(lambda z: math.inf, 0j)


@pytest.mark.slow
def test_current_identity():
    assert current_identity_check().status == Status.PASS
