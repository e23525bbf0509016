#!/usr/bin/env python3
"""
Tests for the PDJ ladder and the two equivalence deciders
"""

import math
from fractions import Fraction

import pytest

from conftest import random_tangent_map
from formal_series import FormalMap, Series, map_compose, map_inverse
from normal_form_errors import PreconditionError
from oned_normal_form import OneDNormalForm
from padic_field import PrimeContext, valuation
from pdj_normal_form import (PDJForm, common_root_exists, compare_pdj_forms,
                             decide_equiv_repelling, decide_equiv_semihyperbolic, pdj_reduce,
                             product_coefficients, rational_root, y_multiplier_map)

HALF, QUARTER = Fraction(1, 2), Fraction(1, 4)


def pd_form(lam, f, g, truncation):
    """(f(x), lam y (1 + g(x))) from ascending coefficient lists starting at degree 1"""
    f_series = Series(1, truncation, {(d,): c for d, c in enumerate(f, start=1)})
    factor = Series(1, truncation, {(0,): 1, **{(d,): c for d, c in enumerate(g, start=1)}})
    return y_multiplier_map(lam, factor, f_series)


def test_pdj_form_validation_and_json():
    """Test the r constraints and the serialized layout"""
    form = PDJForm(HALF, OneDNormalForm(2, Fraction(1), Fraction(0)), (0, 1))
    assert form.to_dict() == {"lambda": "1/2", "m": 2, "rho": "1", "mu": "0", "r": ["0", "1"]}
    assert PDJForm.from_dict(form.to_dict()) == form
    assert PDJForm(HALF, form.oned, (0, 1, 0, 0)).r == (0, 1)
    with pytest.raises(PreconditionError):
        PDJForm(HALF, form.oned, (1, 1))
    with pytest.raises(PreconditionError):
        PDJForm(HALF, form.oned, (0, 1, 1))


def test_pdj_form_as_map():
    """Test the polynomial map (x + x^2, (y/2)(1 + x))"""
    form = PDJForm(HALF, OneDNormalForm(2, Fraction(1), Fraction(0)), (0, 1))
    assert form.as_map(4) == pd_form(HALF, [1, 1], [1], 4)


def test_ladder_is_empty_when_g_has_low_degree(ctx2):
    """Test F0 = (x + x^2, (y/2)(1 + x)): r = x, no ladder steps, identity conjugator"""
    result = pdj_reduce(pd_form(HALF, [1, 1], [1], 5), 5, ctx2)
    assert result.form.r == (0, 1)
    assert all(c == 0 for c in result.ladder.c)
    assert result.conjugator == FormalMap.identity(2, 5)
    assert result.residual.verified


def test_ladder_first_coefficient_is_minus_one(ctx2):
    """Test g = x + x^2: the congruence 1 + 2 c1 = c1 gives c1 = -1"""
    result = pdj_reduce(pd_form(HALF, [1, 1], [1, 1], 3), 3, ctx2)
    assert result.form.r == (0, 1)
    assert result.scaling == 1
    assert result.ladder.c == [-1]
    assert [(m.n, m.margin) for m in result.ladder.c_margins] == [(1, 0)]
    assert result.conjugator.coefficient(2, (1, 1)) == -1
    assert result.residual.verified


def test_ladder_assembles_the_product():
    """Test the distinct-part product against direct multiplication"""
    c = [Fraction(2), Fraction(-1, 3), Fraction(0), Fraction(5)]
    direct = Series.constant(1, 1, 8)
    for i, ci in enumerate(c, start=1):
        direct = direct * Series(1, 8, {(0,): 1, (i,): ci})
    assert product_coefficients(c, 8) == [direct.coefficient((n,)) for n in range(9)]


def test_pdj_rejects_linear_first_component(ctx2):
    """Test that f = x is outside the reduction"""
    with pytest.raises(PreconditionError):
        pdj_reduce(pd_form(HALF, [1], [1, 1], 4), 4, ctx2)


def test_pdj_rejects_non_pd_input(ctx2):
    """Test that a y^2 term in the first component is refused"""
    F = FormalMap((1, HALF), [Series(2, 4, {(2, 0): 1, (0, 2): 1}), Series.zero(2, 4)], 4)
    with pytest.raises(PreconditionError):
        pdj_reduce(F, 4, ctx2)


def test_pdj_random_pd_forms(ctx2, rng):
    """Test deg r < m, r(0) = 0, empty residual and factorial margins at N = 10"""
    N = 10
    for _ in range(20):
        f = [1, 1] + [rng.randint(-2, 2) for _ in range(rng.randint(0, 3))]
        g = [rng.randint(-3, 3) for _ in range(rng.randint(1, 8))]
        result = pdj_reduce(pd_form(HALF, f, g, N), N, ctx2)
        form, ladder = result.form, result.ladder
        assert form.oned.m == 2
        assert len(form.r) <= form.oned.m
        assert form.coefficient(0) == 0
        assert result.residual.verified
        assert ladder.certified
        rho = form.oned.rho * result.scaling ** (form.oned.m - 1)
        for n, c in enumerate(ladder.c, start=1):
            if c:
                assert valuation(math.factorial(n) * rho ** n * c, ctx2) >= 0
        assert product_coefficients(ladder.c, N)[1:] == [ladder.assembled.coefficient((n,))
                                                        for n in range(1, N + 1)]


def test_rational_root():
    """Test exact rational roots"""
    assert rational_root(Fraction(4, 9), 2) == Fraction(2, 3)
    assert rational_root(-8, 3) == -2
    assert rational_root(2, 2) is None
    assert rational_root(-4, 2) is None


def test_common_root_exists():
    """Test simultaneous p-adic roots c^e = s"""
    ctx7 = PrimeContext(7)
    assert common_root_exists([(2, Fraction(4)), (3, Fraction(8))], ctx7)
    assert common_root_exists([(2, Fraction(4)), (3, Fraction(-8))], ctx7)
    assert not common_root_exists([(2, Fraction(4)), (3, Fraction(7))], ctx7)
    # 2 is a square in Q_7 but not a rational square
    assert common_root_exists([(2, Fraction(2)), (4, Fraction(4))], ctx7)
    assert not common_root_exists([(2, Fraction(3))], ctx7)
    assert common_root_exists([(4, Fraction(16)), (6, Fraction(64)), (9, Fraction(512))], ctx7)
    assert not common_root_exists([(4, Fraction(16)), (6, Fraction(64)), (9, Fraction(256))], ctx7)


def test_compare_forms_with_root_of_unity(ctx5):
    """Test r(x) = r'(zeta x) with zeta = -1 when m - 1 = 2"""
    oned = OneDNormalForm(3, Fraction(1), Fraction(0))
    first, second = PDJForm(HALF, oned, (0, 1)), PDJForm(HALF, oned, (0, -1))
    verdict = compare_pdj_forms(first, second, ctx5)
    assert verdict.equivalent
    assert verdict.details["zeta_class"]["residue"] == 2

    quadratic = OneDNormalForm(2, Fraction(1), Fraction(0))
    assert not compare_pdj_forms(PDJForm(HALF, quadratic, (0, 1)),
                                 PDJForm(HALF, quadratic, (0, -1)), ctx5).equivalent


def test_compare_forms_detects_support_and_lambda(ctx5):
    """Test distinct remainder supports and distinct lambdas"""
    oned = OneDNormalForm(3, Fraction(1), Fraction(0))
    assert not compare_pdj_forms(PDJForm(HALF, oned, (0, 1)), PDJForm(HALF, oned, (0, 0, 1)),
                                 ctx5).equivalent
    assert not compare_pdj_forms(PDJForm(HALF, oned), PDJForm(QUARTER, oned), ctx5).equivalent


def test_semihyperbolic_examples(ctx2):
    """Test r = 0 against r = x, and reflexivity"""
    F = pd_form(HALF, [1, 1], [], 6)
    G = pd_form(HALF, [1, 1], [1], 6)
    verdict = decide_equiv_semihyperbolic(F, G, 6, ctx2)
    assert not verdict.equivalent
    assert verdict.label == "inequivalent"
    same = decide_equiv_semihyperbolic(F, F, 6, ctx2)
    assert same.equivalent
    assert same.details["zeta_class"]["residue"] == 0


def test_semihyperbolic_conjugate_pairs(ctx2, rng):
    """Test that K o F o K^-1 is judged equivalent to F for K = diag(c, d) o (tangent map)"""
    N = 6
    seeds = [
        FormalMap((1, HALF), [Series(2, N, {(2, 0): 1, (0, 2): 1}), Series(2, N, {(1, 1): 1})], N),
        FormalMap((1, HALF), [Series(2, N, {(2, 0): 1, (3, 0): 2}), Series(2, N, {(2, 1): 3})], N),
        FormalMap((1, HALF), [Series(2, N, {(3, 0): 1, (1, 1): 1}), Series(2, N, {(1, 1): 1})], N),
    ]
    scalings = [Fraction(3), Fraction(2), Fraction(-1), HALF]
    for i in range(20):
        F = seeds[i % len(seeds)]
        L = FormalMap.linear((scalings[i % 4], rng.choice([5, -1, 3])), N)
        K = map_compose(L, random_tangent_map(rng, N, terms=3))
        G = map_compose(K, map_compose(F, map_inverse(K)))
        assert decide_equiv_semihyperbolic(F, G, N, ctx2).equivalent
        assert decide_equiv_semihyperbolic(G, F, N, ctx2).equivalent


def conjugate_by_linear(F, c, d):
    L = FormalMap.linear((c, d), F.truncation)
    return map_compose(L, map_compose(F, map_inverse(L)))


def test_semihyperbolic_sign_flip_needs_zeta(ctx2):
    """Test F = (x + x^3, (y/2)(1 + x)) against its conjugate by diag(-1, 1)"""
    F = pd_form(HALF, [1, 0, 1], [1], 6)
    G = conjugate_by_linear(F, -1, 1)
    assert G == pd_form(HALF, [1, 0, 1], [-1], 6)
    verdict = decide_equiv_semihyperbolic(F, G, 6, ctx2)
    assert verdict.equivalent
    assert verdict.details["scaling"] == "1"
    assert verdict.details["zeta_class"] == {"residue": 1, "modulus": 2, "group_order": 2,
                                             "discrete_logs": [1]}


def test_semihyperbolic_non_unit_scaling(ctx2):
    """Test F = (x + x^3, (y/2)(1 + x)) against its conjugate by diag(2, 1)"""
    F = pd_form(HALF, [1, 0, 1], [1], 6)
    G = conjugate_by_linear(F, 2, 1)
    assert G == pd_form(HALF, [1, 0, QUARTER], [HALF], 6)
    verdict = decide_equiv_semihyperbolic(F, G, 6, ctx2)
    assert verdict.equivalent
    assert verdict.details["scaling"] == "2"
    assert decide_equiv_semihyperbolic(G, F, 6, ctx2).details["scaling"] == "1/2"


def test_semihyperbolic_irrational_scaling(ctx2, ctx5):
    """Test a pair related by x -> sqrt(17) x, a 2-adic number but not a 5-adic one"""
    F = pd_form(HALF, [1, 0, 1], [0, 1], 6)
    G = pd_form(HALF, [1, 0, Fraction(1, 17)], [0, Fraction(1, 17)], 6)
    verdict = decide_equiv_semihyperbolic(F, G, 6, ctx2)
    assert verdict.equivalent
    assert verdict.reason == "PDJ forms related by a p-adic scaling"
    assert "scaling" not in verdict.details

    oned = OneDNormalForm(3, Fraction(1), Fraction(0))
    first = PDJForm(HALF, oned, (0, 0, 1))
    second = PDJForm(HALF, OneDNormalForm(3, Fraction(1, 17), Fraction(0)), (0, 0, Fraction(1, 17)))
    assert compare_pdj_forms(first, second, ctx2).equivalent
    assert not compare_pdj_forms(first, second, ctx5).equivalent


def scaled_form(form, c):
    """The PDJ form of (c x, y) o F o (x / c, y)"""
    m = form.oned.m
    oned = OneDNormalForm(m, form.oned.rho * c ** (1 - m), form.oned.mu * c ** (2 - 2 * m))
    return PDJForm(form.lam, oned, tuple(r * c ** -k for k, r in enumerate(form.r)))


def test_compare_forms_random(ctx2, ctx5, rng):
    """Test reflexivity, symmetry, scaled copies and separation over 50 random PDJ forms"""
    nonzero = [-3, -2, -1, 1, 2, 3]
    for i in range(50):
        ctx = ctx2 if i % 2 else ctx5
        m = rng.choice([2, 3, 4])
        oned = OneDNormalForm(m, Fraction(rng.choice(nonzero)), Fraction(rng.randint(-3, 3)))
        r = (0, rng.choice(nonzero)) + tuple(rng.randint(-3, 3) for _ in range(m - 2))
        form = PDJForm(HALF, oned, r)
        c = rng.choice([Fraction(3), Fraction(2), Fraction(-1), HALF, Fraction(5)])
        copy = scaled_form(form, c)

        assert compare_pdj_forms(form, form, ctx).equivalent
        assert compare_pdj_forms(copy, copy, ctx).equivalent
        assert compare_pdj_forms(form, copy, ctx).equivalent
        assert compare_pdj_forms(copy, form, ctx).equivalent

        # tripling r_1 leaves a ratio of +-1/3, never a root of unity
        apart = PDJForm(HALF, copy.oned, (0, 3 * copy.coefficient(1)) + copy.r[2:])
        assert not compare_pdj_forms(form, apart, ctx).equivalent
        assert not compare_pdj_forms(apart, form, ctx).equivalent


def test_repelling_examples(ctx2):
    """Test C = 3 vs C = 5 and C = 0 vs C = 1"""
    def repelling(C, extra=None):
        return FormalMap((HALF, QUARTER), [Series(2, 6, extra or {}), Series(2, 6, {(2, 0): C})], 6)

    verdict = decide_equiv_repelling(repelling(3), repelling(5, {(1, 1): 1}), 2, 6, ctx2)
    assert verdict.equivalent
    assert verdict.details["reduced_constants"] == ["1", "1"]
    verdict = decide_equiv_repelling(repelling(0), repelling(1), 2, 6, ctx2)
    assert not verdict.equivalent
    assert verdict.details["resonant_constants"] == ["0", "1"]


def test_repelling_conjugates(ctx2, rng):
    """Test (F, L o K o F o K^-1 o L^-1) for diagonal unit L and tangent-to-identity K"""
    N = 6
    for _ in range(20):
        tails = [{(1, 1): rng.randint(-2, 2), (0, 2): rng.randint(-2, 2)},
                 {(2, 0): rng.choice([0, 1, 3]), (1, 1): rng.randint(-2, 2)}]
        F = FormalMap((HALF, QUARTER), [Series(2, N, t) for t in tails], N)
        L = FormalMap.linear((rng.choice([1, -1, 3, 5]), rng.choice([1, -3, 7])), N)
        K = map_compose(L, random_tangent_map(rng, N, terms=3))
        G = map_compose(K, map_compose(F, map_inverse(K)))
        assert decide_equiv_repelling(F, G, 2, N, ctx2).equivalent
