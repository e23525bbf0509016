#!/usr/bin/env python3
"""
PDJ normal form and the equivalence deciders

A semihyperbolic PD form (f(x), lambda y (1 + g(x))) is reduced to the
polynomial form (f_{m,rho,mu}(x), lambda y (1 + r(x))) with deg r < m.
The second component is straightened by a ladder of maps
J_n = (x, y (1 + c_n x^n)), each c_n fixed by a scalar congruence.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from sympy import integer_nthroot

try:
    from sympy.core.intfunc import igcdex
except ImportError:  # sympy < 1.13
    from sympy.core.numbers import igcdex

from formal_series import (ConjugacyResidual, FormalMap, Series, conjugate_by_scaling,
                           find_integralizing_q, map_compose, one_variable_inverse,
                           verify_conjugacy)
from normal_form_errors import (CertificateViolation, PreconditionError, RootOfUnityMismatch,
                                UnsupportedCaseError)
from oned_normal_form import OneDNormalForm, forms_equivalent, normal_form_1d
from padic_field import (NormValue, PrimeContext, Scalar, format_scalar, is_jth_power,
                         parse_scalar, solve_zeta_constraints, valuation)
from poincare_dulac import (PDResult, reduce_resonant_constant, repelling_normalize,
                            semihyperbolic_normalize)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PDJForm:
    """(f_{m,rho,mu}(x), lambda y (1 + r(x))), r listed by ascending degree"""
    lam: Scalar
    oned: OneDNormalForm
    r: Tuple[Scalar, ...] = ()

    def __post_init__(self):
        r = list(self.r)
        while r and r[-1] == 0:
            r.pop()
        if r and r[0] != 0:
            raise PreconditionError("r(0) must vanish")
        if len(r) > self.oned.m:
            raise PreconditionError(f"deg r must be below m = {self.oned.m}")
        object.__setattr__(self, "r", tuple(Fraction(c) for c in r))

    def coefficient(self, k: int) -> Scalar:
        return self.r[k] if k < len(self.r) else Fraction(0)

    def remainder(self, truncation: int) -> Series:
        return Series(1, truncation, {(k,): c for k, c in enumerate(self.r)})

    def as_map(self, truncation: int) -> FormalMap:
        first = self.oned.series(truncation).degree_range(2, truncation)
        second = {(k, 1): self.lam * c for k, c in enumerate(self.r) if k >= 1}
        return FormalMap((1, self.lam), [Series(2, truncation, {(a[0], 0): c for a, c in first.items()}),
                                         Series(2, truncation, second)], truncation)

    def to_dict(self) -> Dict:
        data = {"lambda": format_scalar(self.lam)}
        data.update(self.oned.to_dict())
        data["r"] = [format_scalar(c) for c in self.r]
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "PDJForm":
        return cls(parse_scalar(data["lambda"]), OneDNormalForm.from_dict(data),
                   tuple(parse_scalar(c) for c in data.get("r", [])))


@dataclass(frozen=True)
class LadderMargin:
    """v_p(n! rho^n value) for a ladder coefficient or an assembled coefficient"""
    n: int
    margin: int

    @property
    def holds(self) -> bool:
        return self.margin >= 0

    def to_dict(self) -> Dict:
        return {"n": self.n, "margin": self.margin}


@dataclass
class GammaLadder:
    """Coefficients c_1..c_K and the assembled product 1 + alpha = prod (1 + c_i x^i)"""
    c: List[Scalar]
    assembled: Series
    c_margins: List[LadderMargin] = field(default_factory=list)
    a_margins: List[LadderMargin] = field(default_factory=list)
    radius: Optional[NormValue] = None

    @property
    def certified(self) -> bool:
        return all(m.holds for m in self.c_margins + self.a_margins)

    def to_dict(self) -> Dict:
        return {
            "c": [format_scalar(c) for c in self.c],
            "alpha": [format_scalar(self.assembled.coefficient((n,)))
                      for n in range(1, self.assembled.truncation + 1)],
            "c_margins": [m.to_dict() for m in self.c_margins],
            "a_margins": [m.to_dict() for m in self.a_margins],
            "radius": str(self.radius) if self.radius else None,
        }


@dataclass
class PDJResult:
    """PDJ form, the conjugator H with H o F0 = F_PDJ o H, and the ladder"""
    form: PDJForm
    conjugator: FormalMap
    ladder: GammaLadder
    residual: ConjugacyResidual
    scaling: Scalar = Fraction(1)

    def to_dict(self) -> Dict:
        return {
            "pdj_form": self.form.to_dict(),
            "conjugator": self.conjugator.to_dict(),
            "ladder": self.ladder.to_dict(),
            "scaling": format_scalar(self.scaling),
            "residual": "verified" if self.residual.verified else self.residual.to_list(),
        }


def split_pd_form(F0: FormalMap) -> Tuple[Scalar, Series, Series]:
    """(lambda, f, g) for F0 = (f(x), lambda y (1 + g(x)))"""
    if F0.var_count != 2 or F0.eigenvalues[0] != 1:
        raise PreconditionError("expected a two-variable map with eigenvalues (1, lambda)")
    lam, N = F0.eigenvalues[1], F0.truncation
    f, g = {(1,): Fraction(1)}, {}
    for k, (i, j), c in F0.nonlinear_terms():
        if k == 1 and j == 0:
            f[(i,)] = c
        elif k == 2 and j == 1:
            g[(i,)] = c / lam
        else:
            raise PreconditionError(f"not a semihyperbolic PD form: term at component {k}, index {(i, j)}")
    return lam, Series(1, N, f), Series(1, N, g)


def embed_first(h: Series) -> FormalMap:
    """(h(x), y) as a two-variable map"""
    N = h.truncation
    tail = {(a[0], 0): c for a, c in h.degree_range(2, N).items()}
    return FormalMap((h.coefficient((1,)), 1), [Series(2, N, tail), Series.zero(2, N)], N)


def y_multiplier_map(lam: Scalar, factor: Series, first: Optional[Series] = None) -> FormalMap:
    """(first(x), lam y factor(x)) with factor(0) = 1; first defaults to x"""
    N = factor.truncation
    one = {(a[0], 0): c for a, c in first.degree_range(2, N).items()} if first is not None else {}
    second = {(a[0], 1): lam * c for a, c in factor.degree_range(1, N - 1).items()}
    return FormalMap((1, lam), [Series(2, N, one), Series(2, N, second)], N)


def product_coefficients(c: List[Scalar], N: int) -> List[Scalar]:
    """Coefficients of prod_i (1 + c_i x^i) through x^N by a distinct-part count"""
    coeffs = [Fraction(0)] * (N + 1)
    coeffs[0] = Fraction(1)
    for i, ci in enumerate(c, start=1):
        if not ci or i > N:
            continue
        for total in range(N, i - 1, -1):
            coeffs[total] += ci * coeffs[total - i]
    return coeffs


class PDJReducer:
    """Runs the one-variable reduction, the rescaling and the ladder"""

    def __init__(self, ctx: PrimeContext, strict: bool = True):
        self.ctx = ctx
        self.strict = strict
        self.logger = logging.getLogger(__name__)

    def _ladder(self, f: Series, g: Series, r: Series, m: int, N: int) -> Tuple[List[Scalar], Series]:
        """Solve c_1, c_2, ... one degree at a time

        c_(n+1) is read off the degree m + n coefficient of
        (1 + g)(1 + alpha o f) - (1 + r)(1 + alpha), linear in the new
        constant. This fixes the sign: for f = x + x^2 and g = x + x^2 the
        expansion gives c_1 = -1, whereas the usual closed-form shortcut for
        that coefficient gives +1. The congruence check after each step is
        what confirms -1.
        """
        x = Series.variable(1, 1, N)
        one = Series.constant(1, 1, N)
        one_plus_alpha = one
        c_values: List[Scalar] = []
        one_plus_g, one_plus_r = one + g, one + r
        for n in range(0, N - m):
            left = one_plus_g * one_plus_alpha.substitute(f)
            right = one_plus_r * one_plus_alpha
            A = (left - right).coefficient((m + n,))
            B = (left * f.power(n + 1) - right * x.power(n + 1)).coefficient((m + n,))
            if B == 0:
                raise CertificateViolation(f"singular ladder equation at step {n + 1}")
            c = -A / B
            c_values.append(c)
            one_plus_alpha = one_plus_alpha * (one + x.power(n + 1).scale(c))
            check = (one_plus_g * one_plus_alpha.substitute(f)
                     - one_plus_r * one_plus_alpha).degree_range(0, m + n)
            if not check.is_zero():
                raise CertificateViolation(f"ladder congruence fails mod x^{m + n + 1}")
            self.logger.debug(f"c_{n + 1} = {c}")
        return c_values, one_plus_alpha

    def _margins(self, ladder: GammaLadder, rho: Scalar, m: int, N: int):
        v_rho = valuation(rho, self.ctx)
        for n, c in enumerate(ladder.c, start=1):
            if c:
                v = math.factorial(n) * c
                ladder.c_margins.append(LadderMargin(n, valuation(v, self.ctx) + n * v_rho))
        for n in range(1, N - m + 1):
            A = ladder.assembled.coefficient((n,))
            if A:
                ladder.a_margins.append(
                    LadderMargin(n, valuation(math.factorial(n) * A, self.ctx) + n * v_rho))
        ladder.radius = self.ctx.norm(rho) * self.ctx.alpha
        failing = [lm for lm in ladder.c_margins + ladder.a_margins if not lm.holds]
        if failing:
            message = f"factorial certificate fails at n = {failing[0].n} (margin {failing[0].margin})"
            if self.strict:
                raise CertificateViolation(message)
            self.logger.warning(message)

    def reduce(self, F0: FormalMap, N: Optional[int] = None) -> PDJResult:
        N = F0.truncation if N is None else N
        F0 = F0.truncate(N)
        lam, f, g = split_pd_form(F0)
        if valuation(lam, self.ctx) == 0:
            raise UnsupportedCaseError(f"|lambda| = 1 is not supported (lambda = {lam})")
        if f.degree_range(2, N).is_zero():
            raise PreconditionError("first component is linear; PDJ reduction does not apply")

        self.logger.info("Step 1: One-variable normal form of the first component")
        oned, h = normal_form_1d(f, N)
        m = oned.m
        g1 = g.substitute(one_variable_inverse(h))

        self.logger.info("Step 2: Integral frame")
        factor = Series.constant(1, 1, N) + g1
        F1 = y_multiplier_map(lam, factor, oned.series(N))
        # only f and g need integral coefficients; lambda stays out of it
        q = find_integralizing_q(y_multiplier_map(Fraction(1), factor, oned.series(N)), self.ctx)
        if q != 1:
            self.logger.warning(f"Rescaling x by q = {q} before the ladder")
        F1s = conjugate_by_scaling(F1, q)
        _, f_s, g_s = split_pd_form(F1s)
        r_s = g_s.degree_range(1, m - 1)
        rho_s = oned.rho * q ** (m - 1)

        self.logger.info("Step 3: Ladder")
        c_values, one_plus_alpha = self._ladder(f_s, g_s, r_s, m, N)
        ladder = GammaLadder(c_values, one_plus_alpha - Series.constant(1, 1, N))
        independent = product_coefficients(c_values, N)
        if any(one_plus_alpha.coefficient((n,)) != independent[n] for n in range(N + 1)):
            raise CertificateViolation("assembled ladder differs from the product of its factors")
        self._margins(ladder, rho_s, m, N)

        self.logger.info("Step 4: Assemble the conjugator")
        gamma_s = FormalMap((1, 1), [Series.zero(2, N),
                                     Series(2, N, {(a[0], 1): c for a, c in ladder.assembled.items()
                                                   if a[0] <= N - 1})], N)
        gamma = conjugate_by_scaling(gamma_s, 1 / q)
        H = map_compose(gamma, embed_first(h))
        form = PDJForm(lam, oned, tuple(g1.coefficient((k,)) for k in range(m)))
        residual = verify_conjugacy(F0, form.as_map(N), H)
        if not residual.verified:
            raise CertificateViolation(f"PDJ residual at {residual.first_offender}")
        self._check_shape(H)
        return PDJResult(form, H, ladder, residual, q)

    def _check_shape(self, H: FormalMap):
        """H = (h(x), y k(x)) with h tangent to identity and k(0) = 1"""
        if H.eigenvalues != (1, 1):
            raise CertificateViolation(f"conjugator linear part is {H.eigenvalues}, expected identity")
        for k, (i, j), _ in H.nonlinear_terms():
            if (k == 1 and j != 0) or (k == 2 and j != 1):
                raise CertificateViolation(f"conjugator has a stray term at component {k}, index {(i, j)}")


def pdj_reduce(F0: FormalMap, N: Optional[int], ctx: PrimeContext, strict: bool = True) -> PDJResult:
    return PDJReducer(ctx, strict).reduce(F0, N)


@dataclass
class EquivalenceVerdict:
    """Outcome of an equivalence decision with the data it rests on"""
    equivalent: bool
    reason: str
    details: Dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return "equivalent" if self.equivalent else "inequivalent"

    def to_dict(self) -> Dict:
        return {"verdict": self.label, "reason": self.reason, **self.details}


def rational_root(x: Scalar, j: int) -> Optional[Scalar]:
    """Rational c with c^j = x, if one exists"""
    x = Fraction(x)
    if x < 0 and j % 2 == 0:
        return None
    num, exact_num = integer_nthroot(abs(x.numerator), j)
    den, exact_den = integer_nthroot(x.denominator, j)
    if not (exact_num and exact_den):
        return None
    return Fraction(-int(num) if x < 0 else int(num), int(den))


def common_root_exists(powers: List[Tuple[int, Scalar]], ctx: PrimeContext) -> bool:
    """Is there c in Q_p with c^e = s for every (e, s)?

    With d = gcd of the exponents and sum u_i e_i = d, necessarily
    c^d = w = prod s_i^u_i; the system is solvable iff every s_i equals
    w^(e_i/d) and w is a d-th power.
    """
    d, us = 0, []
    for e, _ in powers:
        # extended gcd, folded one exponent at a time
        if d == 0:
            d, us = e, [1]
            continue
        a, b, g = igcdex(d, e)
        us = [u * a for u in us] + [b]
        d = g
    w = Fraction(1)
    for (_, s), u in zip(powers, us):
        w *= Fraction(s) ** u
    if any(Fraction(s) != w ** (e // d) for e, s in powers):
        return False
    return is_jth_power(w, d, ctx)


def compare_pdj_forms(first: PDJForm, second: PDJForm, ctx: PrimeContext) -> EquivalenceVerdict:
    details = {"pdj_forms": [first.to_dict(), second.to_dict()]}
    if first.lam != second.lam:
        return EquivalenceVerdict(False, f"lambda differs ({first.lam} vs {second.lam})", details)
    ok, reason = forms_equivalent(first.oned, second.oned, ctx)
    if not ok:
        return EquivalenceVerdict(False, reason, details)
    m = first.oned.m
    ratio = first.oned.rho / second.oned.rho
    support = range(1, m)
    mismatch = [k for k in support if (first.coefficient(k) == 0) != (second.coefficient(k) == 0)]
    if mismatch:
        return EquivalenceVerdict(False, f"remainder supports differ at degree {mismatch[0]}", details)
    active = [k for k in support if second.coefficient(k)]

    c0 = rational_root(ratio, m - 1)
    if c0 is not None:
        constraints = [(k, first.coefficient(k) / (second.coefficient(k) * c0 ** k)) for k in active]
        try:
            zeta = solve_zeta_constraints(constraints, m - 1, ctx)
        except RootOfUnityMismatch as e:
            return EquivalenceVerdict(False, f"no root of unity matches the remainders: {e}", details)
        if zeta is None:
            return EquivalenceVerdict(False, "root-of-unity constraints are inconsistent", details)
        details["scaling"] = format_scalar(c0)
        details["zeta_class"] = zeta.to_dict()
        return EquivalenceVerdict(True, "PDJ forms related by scaling", details)

    powers = [(m - 1, ratio)] + [(k, first.coefficient(k) / second.coefficient(k)) for k in active]
    if common_root_exists(powers, ctx):
        return EquivalenceVerdict(True, "PDJ forms related by a p-adic scaling", details)
    return EquivalenceVerdict(False, "no p-adic scaling matches rho and the remainders", details)


def decide_equiv_semihyperbolic(F: FormalMap, G: FormalMap, N: Optional[int], ctx: PrimeContext,
                                strict: bool = True) -> EquivalenceVerdict:
    forms = []
    for label, M in (("first", F), ("second", G)):
        logger.info(f"Reducing the {label} map to PDJ form")
        pd = semihyperbolic_normalize(M, N, ctx, strict)
        forms.append(pdj_reduce(pd.normal_form, N, ctx, strict).form)
    return compare_pdj_forms(forms[0], forms[1], ctx)


def decide_equiv_repelling(F: FormalMap, G: FormalMap, n: int, N: Optional[int], ctx: PrimeContext,
                           strict: bool = True) -> EquivalenceVerdict:
    results: List[PDResult] = [repelling_normalize(M, n, N, ctx, strict) for M in (F, G)]
    constants = [res.resonant_constant for res in results]
    details = {"resonant_constants": [format_scalar(c) for c in constants]}
    if F.eigenvalues != G.eigenvalues:
        return EquivalenceVerdict(False, "eigenvalues differ", details)
    reduced = [reduce_resonant_constant(res.normal_form, n)[0] for res in results]
    details["reduced_constants"] = [format_scalar(g.coefficient(2, (n, 0))) for g in reduced]
    if (constants[0] == 0) == (constants[1] == 0):
        kind = "linearizable" if constants[0] == 0 else "reducible to C = 1"
        return EquivalenceVerdict(True, f"both {kind}", details)
    return EquivalenceVerdict(False, "one map is linearizable and the other is not", details)
