"""Tests for SL2(Z), PSL2(F_p) and the linear algebra over F_p."""
import itertools
import math

import numpy as np
import pytest

from xp_lab.arith import (FpSubspace, IntMat, MatFp, ProjMatFp, SubalgebraKind, bezout, centered, centered_lift,
                          centralizer, check_prime, classify_subalgebra, double_coset_constraints,
                          enumerate_bounded_height, enumerate_psl2, hecke_normal_form, height, injectivity_radius_bound,
                          is_in_gamma_p, lift_to_sl2z, min_semisimple_trace, p1_action, p1_normalize, p1_points,
                          pm_vector, psl2_order, redundancy_test, small_integral_lift, solve_commutator_system, t0,
                          unipotent_transporter)
from xp_lab.errors import DomainError, RangeError, StructuralError


def _int_product(*mats):
    """Plain integer product of 2x2 entry tuples."""
    out = (1, 0, 0, 1)
    for m in mats:
        a, b, c, d = out
        e, f, g, h = m
        out = (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)
    return out


def _brute_force_commutant(t, Mx, My, p):
    """All g in M2(F_p) with [t, g] = 0 and [t, My^-1 g Mx] = 0, as an (n, 2, 2) array."""
    g = np.array(list(itertools.product(range(p), repeat=4))).reshape(-1, 2, 2)
    T = np.array(t.entries).reshape(2, 2)
    w = np.array(My.inverse().entries).reshape(2, 2) @ g @ np.array(Mx.entries).reshape(2, 2)
    ok = ((T @ g - g @ T) % p == 0).all(axis=(1, 2)) & ((T @ w - w @ T) % p == 0).all(axis=(1, 2))
    return g[ok]


class TestPrimes:
    """Prime validation and residues."""

    @pytest.mark.parametrize("bad", [2, 3, 9, 25, -7, 0])
    def test_rejects(self, bad):
        with pytest.raises(DomainError):
            check_prime(bad)

    def test_centered(self):
        assert centered(4, 5) == -1
        assert centered(2, 5) == 2
        assert centered(-8, 7) == -1

    def test_bezout(self):
        g, s, t = bezout(240, 46)
        assert g == 2
        assert s * 240 + t * 46 == 2

    def test_pm_vector(self):
        assert pm_vector((4, 1), 5) == (1, 4)
        assert pm_vector((0, 3), 7) == (0, 3)
        assert pm_vector((0, 5), 7) == (0, 2)


class TestIntMat:
    """Determinant enforcement and bounded enumeration."""

    def test_det_enforced(self):
        with pytest.raises(DomainError):
            IntMat(1, 1, 1, 1)

    def test_inverse(self):
        M = IntMat(2, 1, 1, 1)
        assert M @ M.inverse() == IntMat.identity()

    def test_bounded_height_matches_brute_force(self):
        brute = {
            e for e in itertools.product(range(-2, 3), repeat=4)
            if e[0] * e[3] - e[1] * e[2] == 1
        }
        found = [M.entries for M in enumerate_bounded_height(2)]
        assert height(IntMat(1, 2, -1, -1)) == 2
        assert len(found) == len(set(found))
        assert set(found) == brute

    def test_bounded_height_rejects_zero(self):
        with pytest.raises(RangeError):
            list(enumerate_bounded_height(0))

    def test_gamma_p_membership(self):
        assert is_in_gamma_p(IntMat(1 - 49, 7, -7, 1), 7)
        assert not is_in_gamma_p(IntMat(1, 1, 0, 1), 7)


class TestMinimalTrace:
    """The minimal semisimple trace on Gamma(p) is p^2 - 2."""

    @pytest.mark.parametrize("p", [5, 7, 11])
    def test_trace(self, p):
        tr, witness = min_semisimple_trace(p, p * p)
        assert tr == p * p - 2
        assert abs(witness.trace) == tr
        assert all((x - y) % p == 0 for x, y in zip(witness.entries, (1, 0, 0, 1)))

    def test_height_below_p_squared(self):
        with pytest.raises(RangeError):
            min_semisimple_trace(7, 48)

    def test_injectivity_radius(self):
        tr, length, radius = injectivity_radius_bound(7)
        assert tr == 47
        assert math.isclose(length, 2 * math.acosh(23.5), rel_tol=1e-14)
        assert radius == length / 2


class TestPSL2:
    """Enumeration and projective normalization."""

    @pytest.mark.parametrize("p, order", [(5, 60), (7, 168)])
    def test_order(self, p, order):
        elements = enumerate_psl2(p)
        assert len(elements) == order == psl2_order(p)
        assert len(set(elements)) == order

    def test_projective_class_ignores_scalars(self):
        g = ProjMatFp.from_entries(7, (2, 4, 6, 3))
        assert g == ProjMatFp.from_entries(7, (1, 2, 3, 5))
        assert g.entries[0] == 1

    def test_orders_of_generators(self):
        assert ProjMatFp.from_entries(7, (0, -1, 1, 0)).order() == 2
        assert ProjMatFp.from_entries(7, (0, 1, -1, 1)).order() == 3
        assert ProjMatFp.from_entries(7, (1, 1, 0, 1)).order() == 7

    def test_lift_to_sl2z_reduces_back(self):
        for g in enumerate_psl2(5):
            assert lift_to_sl2z(g).proj(5) == g

    def test_lift_rejects_bad_determinant(self):
        with pytest.raises(DomainError):
            lift_to_sl2z(MatFp(7, (3, 0, 0, 1)))


class TestSubalgebras:
    """Centralizers and their classification."""

    @pytest.mark.parametrize("p, kind", [(5, SubalgebraKind.SPLIT_TORUS), (7, SubalgebraKind.NONSPLIT_TORUS)])
    def test_rotation_centralizer(self, p, kind):
        C = centralizer([t0(p)])
        assert C.dim == 2
        assert classify_subalgebra(C) == kind

    def test_unipotent_centralizer(self):
        C = centralizer([MatFp(7, (1, 1, 0, 1))])
        assert classify_subalgebra(C) == SubalgebraKind.NILPOTENT_EXT

    def test_scalars_and_full_algebra(self):
        assert centralizer([MatFp.identity(7)]).dim == 4
        assert classify_subalgebra(FpSubspace.full(7)) == SubalgebraKind.OTHER
        assert classify_subalgebra(FpSubspace.span(7, [MatFp.identity(7)])) == SubalgebraKind.SCALARS

    def test_empty_centralizer_needs_p(self):
        with pytest.raises(DomainError):
            centralizer([])


class TestCommutatorSystem:
    """Linear solve against brute force over all of M2(F_5)."""

    @pytest.mark.parametrize("Mx, My", [
        (IntMat(2, 1, 1, 1), IntMat(1, 2, 0, 1)),
        (IntMat(1, 0, 5, 1), IntMat(1, 5, 0, 1)),
        (IntMat(0, -1, 1, 0), IntMat(1, 1, 0, 1)),
    ])
    def test_matches_brute_force(self, Mx, My):
        p = 5
        t = t0(p)
        X, Y = Mx.mod(p), My.inverse().mod(p)
        brute = []
        for e in itertools.product(range(p), repeat=4):
            g = MatFp(p, e)
            w = Y @ g @ X
            if (t @ g - g @ t).is_zero() and (t @ w - w @ t).is_zero():
                brute.append(g)
        sol = solve_commutator_system(t, Mx, My, p)
        assert p ** sol.dim == len(brute)
        assert all(sol.contains(g) for g in brute)

    @pytest.mark.parametrize("p", [5, 7])
    def test_random_samples_match_brute_force(self, p, rng):
        heights = list(enumerate_bounded_height(5))
        for _ in range(100):
            t = MatFp(p, tuple(int(v) for v in rng.integers(0, p, size=4)))
            if t.is_scalar():
                t = t + t0(p)
            Mx, My = (heights[int(i)] for i in rng.integers(0, len(heights), size=2))
            brute = _brute_force_commutant(t, Mx, My, p)
            sol = solve_commutator_system(t, Mx, My, p)
            assert p ** sol.dim == len(brute)
            assert all(sol.contains(MatFp(p, tuple(int(v) for v in g.ravel()))) for g in brute)
            assert redundancy_test(t, Mx, My, p) == (sol.dim == 2)

    def test_rejects_scalar_t(self):
        with pytest.raises(DomainError):
            solve_commutator_system(MatFp.identity(5), IntMat.identity(), IntMat.identity(), 5)

    def test_redundancy(self):
        assert redundancy_test(t0(5), IntMat.identity(), IntMat.identity(), 5)
        assert not redundancy_test(t0(5), IntMat(1, 1, 0, 1), IntMat.identity(), 5)

    def test_small_integral_lift(self):
        a, b, m = small_integral_lift(MatFp(7, (3, 1, -1, 3)))
        assert (a, b, m) == (1, -2, 5)
        assert a * a + b * b == m

    def test_centered_lift_keeps_the_given_scaling(self):
        assert centered_lift(MatFp(7, (3, 1, -1, 3))) == (3, 1, 10)

    def test_lift_prefers_the_smallest_degree(self):
        g = MatFp(11, (2, 3, -3, 2))
        assert centered_lift(g) == (2, 3, 13)
        assert small_integral_lift(g) == (3, -1, 10)


class TestHeckeNormalForm:
    """U g V = [[0, m], [-1, 0]]."""

    @pytest.mark.parametrize("g", [(2, 0, 0, 1), (1, 0, 0, 2), (1, 1, 0, 2), (3, 1, 1, 1), (2, 1, 0, 3)])
    def test_normal_form(self, g):
        U, V, m = hecke_normal_form(g)
        assert m == g[0] * g[3] - g[1] * g[2]
        assert _int_product(U.entries, g, V.entries) == (0, m, -1, 0)

    def test_rejects_imprimitive(self):
        with pytest.raises(StructuralError):
            hecke_normal_form((2, 0, 0, 2))

    def test_rejects_negative_det(self):
        with pytest.raises(DomainError):
            hecke_normal_form((0, 1, 1, 0))


class TestUnipotentTransporter:
    def test_transporter_found(self):
        S = ProjMatFp.from_entries(7, (0, -1, 1, 0))
        B = unipotent_transporter(IntMat(1, 1, 0, 1), IntMat(1, 0, 1, 1), S)
        assert B is not None
        assert (B.a, B.c) in ((0, 1), (0, -1))

    def test_hypothesis_fails(self):
        B = unipotent_transporter(IntMat(1, 1, 0, 1), IntMat(1, 0, 1, 1), ProjMatFp.identity(7))
        assert B is None

    def test_rejects_identity(self):
        with pytest.raises(DomainError):
            unipotent_transporter(IntMat.identity(), IntMat(1, 1, 0, 1), ProjMatFp.identity(7))


class TestProjectiveLine:
    """P^1(F_p) and the double coset pinning."""

    def test_points(self):
        assert len(p1_points(5)) == 6
        assert p1_normalize((3, 6), 7) == (4, 1)

    def test_zero_vector(self):
        with pytest.raises(DomainError):
            p1_normalize((0, 0), 5)

    def test_identity_fixes_points(self):
        e = ProjMatFp.identity(7)
        assert all(p1_action(e, x) == x for x in p1_points(7))

    def test_three_constraints_pin_the_element(self):
        k = ProjMatFp.from_entries(7, (1, 2, 3, 7))
        hs = [ProjMatFp.from_entries(7, (1, 0, x, 1)) for x in range(3)]
        result = double_coset_constraints([(k @ h, h) for h in hs])
        assert result.consistent
        assert result.pinned == 3
        assert result.element == k

    def test_conflicting_constraints(self):
        k = ProjMatFp.from_entries(7, (1, 2, 3, 7))
        e = ProjMatFp.identity(7)
        result = double_coset_constraints([(k, e), (e, e)])
        assert not result.consistent
        assert result.element is None
