"""Tests for repulsion of cusps, CM points and diagonal translates."""
import numpy as np
import pytest
from pydantic import ValidationError

from xp_lab.arith import FpSubspace, IntMat, MatFp, ProjMatFp, SubalgebraKind, centralizer, t0
from xp_lab.config import RepulsionJob
from xp_lab.errors import DomainError, PreconditionError
from xp_lab.report import CheckReport, Status
from xp_lab.repulsion import (SpecialSet, check_cm_repulsion, check_constructed_cm, check_cusp_repulsion,
                              cm_degree_agreement,
                              commutator_degree, constructed_cm_instance, constructed_hecke_sample,
                              diag_neighbourhoods, hecke_curve_distance, heegner_partners,
                              mobius_correction_terms, mobius_ratio_asymptotic, mult_trend_check,
                              mult_vs_volume_report, on_hecke_divisor, replay, rotation_family,
                              sample_fundamental_domain, trichotomy_outcome, _replay_args)
from xp_lab.triangle import compute_vertex_params, in_fundamental_domain
from xp_lab.verifiers.repulsion_verifier import mobius_check


@pytest.fixture(scope="module")
def geom7():
    return compute_vertex_params(7)


@pytest.fixture
def job7():
    return RepulsionJob(p=7, samples=2)


class TestRepulsionJob:
    def test_m_bound(self, job7):
        np.testing.assert_allclose(job7.m_bound, 16 * 7 ** 0.2, rtol=1e-12)

    def test_with_delta(self, job7):
        assert job7.with_delta(0.2).delta == 0.2
        assert job7.delta == 0.1

    @pytest.mark.parametrize("values", [{"p": 9}, {"p": 7, "delta": 0.3}, {"p": 7, "samples": 0}])
    def test_rejects(self, values):
        with pytest.raises(ValidationError):
            RepulsionJob(**values)


class TestConstructedCM:
    """The pair built from 1 + t0 lies on T_2."""

    @pytest.mark.parametrize("p", [7, 11, 13])
    def test_degree_two(self, p):
        a, b, m, _ = commutator_degree(p, *constructed_cm_instance())
        assert m == 2
        assert a * a + b * b == 2

    def test_report(self, job7):
        assert check_constructed_cm(job7).status == Status.PASS

    def test_nonsquare_two(self):
        report = check_constructed_cm(RepulsionJob(p=11))
        assert report.status == Status.PASS
        assert report.detail["on_divisor"] is None

    def test_coincident_points(self):
        with pytest.raises(PreconditionError):
            commutator_degree(7, IntMat.identity(), IntMat.identity())


class TestHeegnerPairs:
    def test_partners_exist(self):
        assert heegner_partners(7)

    def test_degrees_agree(self):
        assert cm_degree_agreement(7, heegner_partners(7)) == []

    def test_p5_stops_after_the_degree_check(self):
        report = check_cm_repulsion(RepulsionJob(p=5))
        assert report.status == Status.INCONCLUSIVE
        assert report.detail["partners"] > 0

    def test_index_divisible_by_p(self):
        e = ProjMatFp.identity(7)
        assert not on_hecke_divisor((e, 1j), (e, 1j), 7)

    def test_replay_of_a_degree_check(self, job7):
        g_y = heegner_partners(7)[0]
        report = CheckReport.failed("repulsion.cm.p7", witness={
            "replay": _replay_args("cm_degree", job7, g_y=list(g_y.entries))})
        assert replay(report).status == Status.PASS

    def test_replay_needs_data(self):
        with pytest.raises(PreconditionError):
            replay(CheckReport.passed("repulsion.cm.p7"))


class TestDiagonalTranslates:
    """Neighbourhoods of Delta_g and the transporter subalgebra."""

    def test_identity_neighbourhood(self, geom7):
        e = ProjMatFp.identity(7)
        xi = ((e, geom7.i_vertex),) * 4
        assert e in diag_neighbourhoods(geom7, xi, 0.2)

    def test_hecke_sample(self, geom7):
        sample = constructed_hecke_sample(geom7)
        x, y = sample.xi[2], sample.xi[3]
        m, d = hecke_curve_distance(geom7, x, y, 6, 1.0)
        assert m == 2
        assert d < 1e-6

    def test_trichotomy_torus(self):
        kind, ok, _ = trichotomy_outcome(centralizer([t0(7)]))
        assert kind == SubalgebraKind.NONSPLIT_TORUS
        assert ok

    def test_trichotomy_violation(self):
        kind, ok, _ = trichotomy_outcome(FpSubspace.span(7, [MatFp(7, (0, 1, 0, 0))]))
        assert kind == SubalgebraKind.OTHER
        assert not ok


class TestMobius:
    """The boundary modulus of (R - R e^{it})/(1 - R^2 e^{it})."""

    def test_unit_radius(self):
        value, predicted = mobius_ratio_asymptotic(1.0, 0.1)
        np.testing.assert_allclose(value, 1.0, rtol=1e-12)
        assert predicted == 1.0

    @pytest.mark.parametrize("theta", [0.05, 0.1, 0.2])
    def test_exact_leading_term(self, theta):
        terms = mobius_correction_terms(1.0 - 1e-2 * theta, theta)
        assert terms["rel_exact"] <= 1e-3

    def test_regime(self):
        with pytest.raises(DomainError):
            mobius_ratio_asymptotic(1.0, 0.5)
        with pytest.raises(DomainError):
            mobius_ratio_asymptotic(0.98, 0.1)

    def test_grid_report(self):
        assert mobius_check().status == Status.PASS


class TestMultiplicity:
    """Multiplicity along special sets against volume."""

    def test_diagonal_points(self, job7):
        report = mult_vs_volume_report([rotation_family(7)], SpecialSet.DIAGONALS, job7)
        assert report.detail["points"] >= 1
        assert report.detail["fitted"] > 0

    def test_rejects_p5(self):
        with pytest.raises(DomainError):
            rotation_family(5)

    @staticmethod
    def _fitted(p, value):
        return CheckReport.passed(f"repulsion.mult_vs_volume.SBC.p{p}",
                                  detail={"p": p, "fitted": value, "set": "SBC"})

    def test_trend_decreasing(self):
        report = mult_trend_check([self._fitted(11, 0.5), self._fitted(7, 0.9)])
        assert report.status == Status.PASS
        assert [p for p, _ in report.detail["fitted"]] == [7, 11]

    def test_trend_growing(self):
        report = mult_trend_check([self._fitted(7, 0.5), self._fitted(11, 0.9)])
        assert report.status == Status.FAIL
        assert report.witness["p"] == [7, 11]


class TestSampling:
    def test_points_in_F(self, geom7):
        points = sample_fundamental_domain(geom7, 10, 42)
        assert len(points) == 10
        assert all(in_fundamental_domain(geom7, z.coord) for z in points)

    def test_deterministic(self, geom7):
        a = sample_fundamental_domain(geom7, 5, 7)
        b = sample_fundamental_domain(geom7, 5, 7)
        assert [z.coord for z in a] == [z.coord for z in b]


@pytest.mark.slow
def test_cusp_repulsion_p7(job7):
    reports = check_cusp_repulsion(job7)
    assert [r.id for r in reports] == ["repulsion.cusp.a.p7", "repulsion.cusp.b.p7", "repulsion.cusp.c.p7"]
    a, b, c = reports
    # the (2+delta) log 7 ball covers X(7) several times over
    assert a.status == Status.FAIL
    assert a.witness["replay"]["check"] == "cusp_a"
    assert len(a.witness["distances"]) > 1
    assert b.status == Status.PASS
    assert c.status == Status.PASS
