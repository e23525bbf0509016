#!/usr/bin/env python3
"""
Tests for resonances, the Poincare-Dulac normalizer and the certified drivers
"""

from fractions import Fraction

import pytest

from conftest import random_integral_map
from formal_series import FormalMap, Series, verify_conjugacy
from normal_form_errors import PreconditionError, UnsupportedCaseError
from poincare_dulac import (Resonance, classify_eigenvalues, find_resonances,
                            linearization_obstruction, normalize_auto, pd_normalize,
                            reduce_resonant_constant, repelling_normalize,
                            semihyperbolic_normalize, solve_conjugator_linear_system)

HALF, QUARTER = Fraction(1, 2), Fraction(1, 4)


def pd_map(eigenvalues, truncation, first=None, second=None):
    return FormalMap(eigenvalues, [Series(2, truncation, first or {}),
                                   Series(2, truncation, second or {})], truncation)


def test_resonances_of_two_and_sixteen():
    """Test the single resonance lambda2 = lambda1^4"""
    assert find_resonances(2, 16, 10) == [Resonance(2, (4, 0))]
    assert find_resonances(2, 16, 20) == [Resonance(2, (4, 0))]


def test_resonances_with_eigenvalue_one():
    """Test the semihyperbolic resonance pattern"""
    found = set(find_resonances(1, 3, 5))
    expected = ({Resonance(1, (j, 0)) for j in range(2, 6)}
                | {Resonance(2, (k, 1)) for k in range(1, 5)})
    assert found == expected


def test_no_resonances_for_coprime_integers():
    """Test that 2^i 3^j never hits 2 or 3 again"""
    assert find_resonances(2, 3, 10) == []


def test_resonance_count_matches_brute_force():
    """Test finiteness for eigenvalues strictly inside the unit disc"""
    for lam1, lam2 in [(HALF, QUARTER), (Fraction(1, 3), Fraction(1, 9)), (HALF, Fraction(1, 3))]:
        for maxdeg in (4, 8, 12):
            brute = [(k, (i, d - i)) for d in range(2, maxdeg + 1) for i in range(d, -1, -1)
                     for k in (1, 2) if (lam1, lam2)[k - 1] == lam1 ** i * lam2 ** (d - i)]
            assert [(r.component, r.index) for r in find_resonances(lam1, lam2, maxdeg)] == brute


def test_classify_eigenvalues(ctx2):
    """Test the driver routing by eigenvalue pattern"""
    assert classify_eigenvalues(HALF, QUARTER, ctx2).kind == "repelling"
    assert classify_eigenvalues(HALF, QUARTER, ctx2).n == 2
    assert classify_eigenvalues(1, HALF, ctx2).kind == "semihyperbolic"
    assert classify_eigenvalues(2, HALF, ctx2).kind == "saddle"
    assert classify_eigenvalues(3, 5, ctx2).kind == "unit"


def test_pd_normalize_linear_map():
    """Test that a linear map is its own normal form"""
    F = FormalMap.linear((2, 16), 5)
    result = pd_normalize(F)
    assert result.normal_form == F
    assert result.conjugator == FormalMap.identity(2, 5)


def test_pd_normalize_coefficient_formula():
    """Test the quadratic conjugator coefficient 1/(2 - 256)"""
    F = pd_map((2, 16), 4, {(0, 2): 1})
    result = pd_normalize(F, 4)
    assert result.conjugator.coefficient(1, (0, 2)) == Fraction(-1, 254)
    assert result.normal_form == FormalMap.linear((2, 16), 4)
    assert result.residual.verified


def test_pd_normalize_resonant_term_survives():
    """Test the (1/2, 1/4) example: x^2 stays, xy is removed with 8/3"""
    F = pd_map((HALF, QUARTER), 3, {(1, 1): 1}, {(2, 0): 1})
    result = pd_normalize(F, 3)
    assert result.normal_form == pd_map((HALF, QUARTER), 3, second={(2, 0): 1})
    assert result.conjugator.coefficient(1, (1, 1)) == Fraction(8, 3)
    assert verify_conjugacy(F, result.normal_form, result.conjugator).verified


def test_repelling_example(ctx2):
    """Test b = 1 and a zero margin at (1, (1, 1))"""
    F = pd_map((HALF, QUARTER), 6, {(1, 1): 1}, {(2, 0): 1})
    result = repelling_normalize(F, 2, 6, ctx2)
    assert result.resonant_constant == 1
    assert [(k, a) for k, a, _ in result.normal_form.nonlinear_terms()] == [(2, (2, 0))]
    assert result.residual.verified
    assert result.certified
    margins = {(c.component, c.index): c.margin for c in result.certificates}
    assert margins[(1, (1, 1))] == 0
    assert not result.inverted and result.scaling == 1


def test_repelling_already_in_form(ctx2):
    """Test that a PD form needs the identity conjugator"""
    F = pd_map((HALF, QUARTER), 6, second={(2, 0): 1})
    result = repelling_normalize(F, 2, 6, ctx2)
    assert result.conjugator.is_linear()
    assert result.conjugator.eigenvalues == (1, 1)
    assert result.resonant_constant == 1


def test_repelling_attracting_input_goes_through_inverse(ctx2):
    """Test |lambda| < 1 handled by normalizing F^-1 and reported for F"""
    F = pd_map((2, 4), 6, {(1, 1): 1, (0, 2): 3}, {(2, 0): 1, (1, 1): -1})
    result = repelling_normalize(F, 2, 6, ctx2)
    assert result.inverted
    assert result.residual.verified
    assert verify_conjugacy(F, result.normal_form, result.conjugator).verified
    assert result.resonant_constant == 1


def test_repelling_rescales_non_integral_input(ctx2):
    """Test that a non-integral tail is normalized in a q-scaled frame"""
    F = pd_map((HALF, QUARTER), 6, {(1, 1): Fraction(1, 8)}, {(2, 0): Fraction(1, 2)})
    result = repelling_normalize(F, 2, 6, ctx2)
    assert result.scaling == 8
    assert result.resonant_constant == HALF
    assert verify_conjugacy(F, result.normal_form, result.conjugator).verified


def test_repelling_preconditions(ctx2):
    """Test unit eigenvalues and wrong eigenvalue shapes"""
    with pytest.raises(UnsupportedCaseError):
        repelling_normalize(pd_map((3, 9), 4), 2, 4, ctx2)
    with pytest.raises(PreconditionError):
        repelling_normalize(pd_map((HALF, Fraction(1, 8)), 4), 2, 4, ctx2)


def test_repelling_random_maps(ctx2, rng):
    """Test residual, PD shape and nonnegative margins on 20 random integral maps at N = 12"""
    degree = 12
    for _ in range(20):
        F = random_integral_map(rng, (HALF, QUARTER), degree, terms=5)
        result = repelling_normalize(F, 2, degree, ctx2)
        assert result.residual.verified
        assert all(s == (2, (2, 0)) for s in ((k, a) for k, a, _ in result.normal_form.nonlinear_terms()))
        assert all(c.margin >= 0 for c in result.certificates)


def test_semihyperbolic_example(ctx2):
    """Test the 4/3 coefficient and its zero margin"""
    F = pd_map((1, HALF), 4, {(0, 2): 1})
    result = semihyperbolic_normalize(F, 4, ctx2)
    assert result.normal_form == FormalMap.linear((1, HALF), 4)
    assert result.conjugator.coefficient(1, (0, 2)) == Fraction(4, 3)
    margins = {(c.component, c.index): c.margin for c in result.certificates}
    assert margins[(1, (0, 2))] == 0


def test_semihyperbolic_already_in_form(ctx2):
    """Test that only resonant monomials means nothing to do"""
    F = pd_map((1, HALF), 5, {(2, 0): 1})
    result = semihyperbolic_normalize(F, 5, ctx2)
    assert result.conjugator.is_linear()
    assert result.normal_form == F


def test_semihyperbolic_preconditions(ctx2):
    """Test missing eigenvalue 1 and |lambda| = 1"""
    with pytest.raises(PreconditionError):
        semihyperbolic_normalize(pd_map((2, HALF), 4), 4, ctx2)
    with pytest.raises(UnsupportedCaseError):
        semihyperbolic_normalize(pd_map((1, 3), 4), 4, ctx2)


def test_semihyperbolic_random_maps(ctx2, rng):
    """Test residual, integral PD tail and nonnegative margins on 20 random maps at N = 12"""
    degree = 12
    for _ in range(20):
        F = random_integral_map(rng, (1, HALF), degree, terms=5)
        result = semihyperbolic_normalize(F, degree, ctx2)
        assert result.residual.verified
        assert result.certified
        assert all(c.margin >= 0 for c in result.normal_form_margins)
        for k, (i, j), _ in result.normal_form.nonlinear_terms():
            assert (k == 1 and j == 0) or (k == 2 and j == 1)


def test_semihyperbolic_attracting_lambda(ctx3):
    """Test lambda = 3 over Q_3 through the inverse"""
    F = pd_map((1, 3), 5, {(1, 1): 1, (2, 0): 1}, {(0, 2): 2, (1, 1): 3})
    result = semihyperbolic_normalize(F, 5, ctx3)
    assert result.inverted
    assert verify_conjugacy(F, result.normal_form, result.conjugator).verified


def test_normalize_auto_refuses_saddles(ctx2):
    """Test the out-of-scope message for resonant saddles"""
    with pytest.raises(UnsupportedCaseError, match="open problem"):
        normalize_auto(pd_map((2, HALF), 4, {(2, 1): 1}), 4, ctx2)


def test_normalize_auto_generic_route(ctx2):
    """Test that unit eigenvalues fall back to the uncertified normalizer"""
    result = normalize_auto(pd_map((3, 5), 4, {(2, 0): 1}, {(1, 1): 2}), 4, ctx2)
    assert result.mode == "generic"
    assert result.certificates == []
    assert result.residual.verified


def test_reduce_resonant_constant():
    """Test C -> 1 by diag(1, 1/C), and the C = 0, C = 1 identities"""
    F0 = pd_map((HALF, QUARTER), 5, second={(2, 0): 5})
    reduced, L = reduce_resonant_constant(F0)
    assert L == FormalMap.linear((1, Fraction(1, 5)), 5)
    assert reduced.coefficient(2, (2, 0)) == 1
    assert verify_conjugacy(F0, reduced, L).verified

    linear = FormalMap.linear((HALF, QUARTER), 5)
    assert reduce_resonant_constant(linear, 2) == (linear, FormalMap.identity(2, 5))

    unit = pd_map((HALF, QUARTER), 5, second={(2, 0): 1})
    reduced, L = reduce_resonant_constant(unit, 2)
    assert reduced == unit
    assert L == FormalMap.identity(2, 5)

    with pytest.raises(PreconditionError):
        reduce_resonant_constant(pd_map((HALF, QUARTER), 5, {(1, 1): 1}, {(2, 0): 1}), 2)


@pytest.mark.parametrize("lam, n", [(HALF, 2), (Fraction(1, 3), 2), (HALF, 3)])
def test_linearization_is_obstructed(lam, n):
    """Test that intertwining with the linear part forces a zero y-coefficient"""
    assert linearization_obstruction(lam, n) == 0


def test_oracle_matches_normalizer(rng):
    """Test the normalizer against the exact linear solve, coefficient for coefficient"""
    eigenvalue_pairs = [(HALF, QUARTER), (1, Fraction(1, 3)), (2, Fraction(3, 5))]
    for i in range(10):
        F = random_integral_map(rng, eigenvalue_pairs[i % 3], 8, terms=5)
        result = pd_normalize(F, 8)
        Phi, F0 = solve_conjugator_linear_system(F, 8)
        assert Phi == result.conjugator
        assert F0 == result.normal_form
