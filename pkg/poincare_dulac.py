#!/usr/bin/env python3
"""
Poincare-Dulac normalization

Resonance detection, the degree-by-degree normalizer, and the two
certified drivers: resonant repelling maps with eigenvalues (lambda,
lambda^n) and semihyperbolic maps with eigenvalues (1, lambda). Drivers
work in an integral frame (rescaled by q = p^s) and on F^-1 when the
input is attracting, then report everything in the caller's frame.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

from sympy import Matrix, Poly, Rational, Symbol, expand, linsolve, symbols

from dynamic_groups import Certificate, TauSpec, tail_margins
from formal_series import (ConjugacyResidual, FormalMap, MultiIndex, Series, compose_to,
                           conjugate_by_scaling, find_integralizing_q,
                           homogeneous_indices, map_inverse, verify_conjugacy)
from normal_form_errors import (SADDLE_MESSAGE, CertificateViolation, PreconditionError,
                                UnsupportedCaseError)
from padic_field import PrimeContext, Scalar, format_scalar, valuation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Resonance:
    """lambda_k = lambda_1^i lambda_2^j for index (i, j), |index| >= 2"""
    component: int
    index: MultiIndex

    def to_dict(self) -> Dict:
        return {"component": self.component, "index": list(self.index)}


def monomial_eigenvalue(eigenvalues: Sequence[Scalar], index: MultiIndex) -> Scalar:
    value = Fraction(1)
    for lam, e in zip(eigenvalues, index):
        value *= lam ** e
    return value


def find_resonances(lam1, lam2, maxdeg: int) -> List[Resonance]:
    eigenvalues = (Fraction(lam1), Fraction(lam2))
    if 0 in eigenvalues:
        raise PreconditionError("eigenvalues must be nonzero")
    found = []
    for d in range(2, maxdeg + 1):
        for index in homogeneous_indices(2, d):
            value = monomial_eigenvalue(eigenvalues, index)
            for k in (1, 2):
                if eigenvalues[k - 1] == value:
                    found.append(Resonance(k, index))
    return found


@dataclass(frozen=True)
class EigenvalueClass:
    """Which driver handles a pair of eigenvalues"""
    kind: str
    n: Optional[int] = None


def repelling_exponent(lam1: Scalar, lam2: Scalar, ctx: PrimeContext) -> Optional[int]:
    """n >= 2 with lam2 = lam1^n, read off from the valuations"""
    v1, v2 = valuation(lam1, ctx), valuation(lam2, ctx)
    if v1 == 0 or v2 % v1:
        return None
    n = v2 // v1
    if n >= 2 and Fraction(lam1) ** n == Fraction(lam2):
        return int(n)
    return None


def classify_eigenvalues(lam1, lam2, ctx: PrimeContext, maxdeg: int = 12) -> EigenvalueClass:
    lam1, lam2 = Fraction(lam1), Fraction(lam2)
    if lam1 == 0 or lam2 == 0:
        raise PreconditionError("eigenvalues must be nonzero")
    v1, v2 = valuation(lam1, ctx), valuation(lam2, ctx)
    if lam1 == 1 and v2 != 0:
        return EigenvalueClass("semihyperbolic")
    n = repelling_exponent(lam1, lam2, ctx)
    if n is not None:
        return EigenvalueClass("repelling", n)
    if v1 * v2 < 0 and find_resonances(lam1, lam2, maxdeg):
        return EigenvalueClass("saddle")
    if v1 == 0 or v2 == 0:
        return EigenvalueClass("unit")
    return EigenvalueClass("generic")


@dataclass
class PDResult:
    """Normal form F0, conjugator Phi with Phi o F = F0 o Phi, and certificates"""
    mode: str
    normal_form: FormalMap
    conjugator: FormalMap
    inverse: FormalMap
    resonances: List[Resonance]
    residual: ConjugacyResidual
    certificates: List[Certificate] = field(default_factory=list)
    normal_form_margins: List[Certificate] = field(default_factory=list)
    scaling: Scalar = Fraction(1)
    inverted: bool = False
    n: Optional[int] = None

    @property
    def certified(self) -> bool:
        return all(c.holds for c in self.certificates + self.normal_form_margins)

    @property
    def worst_margin(self) -> Optional[Certificate]:
        return min(self.certificates + self.normal_form_margins, key=lambda c: c.margin,
                   default=None)

    @property
    def resonant_constant(self) -> Scalar:
        """Coefficient b of x^n in the second component (repelling forms)"""
        if self.n is None:
            raise PreconditionError("resonant constant is defined for repelling forms only")
        return self.normal_form.coefficient(2, (self.n, 0))

    def to_dict(self) -> Dict:
        return {
            "mode": self.mode,
            "n": self.n,
            "scaling": format_scalar(self.scaling),
            "inverted": self.inverted,
            "normal_form": self.normal_form.to_dict(),
            "conjugator": self.conjugator.to_dict(),
            "inverse": self.inverse.to_dict(),
            "resonances": [r.to_dict() for r in self.resonances],
            "certificates": [c.to_dict() for c in self.certificates],
            "normal_form_margins": [c.to_dict() for c in self.normal_form_margins],
            "residual": "verified" if self.residual.verified else self.residual.to_list(),
        }


def _update_conjugator(Phi: FormalMap, P: List[Dict[MultiIndex, Fraction]], m: int) -> FormalMap:
    """Phi <- (Id + P_m) o Phi"""
    r, N = Phi.var_count, Phi.truncation
    inner = Phi.components()
    tails = []
    for k in range(r):
        correction = Series(r, N, P[k]).compose(inner)
        tails.append(Phi.tails[k] + correction)
    return FormalMap(Phi.eigenvalues, tails, N)


def pd_normalize(F: FormalMap, N: Optional[int] = None) -> PDResult:
    """Remove every non-resonant monomial through degree N

    At degree m the current residual E of Phi o F - F0 o Phi is either
    absorbed into F0 (resonant index) or killed by P = E / (lambda_k - lambda^a).
    Free resonant coefficients of each H_m are zero.
    """
    N = F.truncation if N is None else N
    if N > F.truncation:
        raise PreconditionError(f"map known only through degree {F.truncation}, asked for {N}")
    F = F.truncate(N)
    r, lam = F.var_count, F.eigenvalues
    Phi = FormalMap.identity(r, N)
    normal_tails: List[Dict[MultiIndex, Fraction]] = [{} for _ in range(r)]

    for m in range(2, N + 1):
        F0 = FormalMap(lam, [Series(r, m, t) for t in normal_tails], m)
        Phi_m = Phi.truncate(m)
        left = compose_to(Phi_m, F, m)
        right = compose_to(F0, Phi_m, m)
        P: List[Dict[MultiIndex, Fraction]] = [{} for _ in range(r)]
        for k in range(1, r + 1):
            for index in homogeneous_indices(r, m):
                e = left.coefficient(k, index) - right.coefficient(k, index)
                if not e:
                    continue
                mono = monomial_eigenvalue(lam, index)
                if mono == lam[k - 1]:
                    normal_tails[k - 1][index] = normal_tails[k - 1].get(index, 0) + e
                else:
                    P[k - 1][index] = e / (lam[k - 1] - mono)
        if any(P):
            Phi = _update_conjugator(Phi, P, m)
        logger.debug(f"Degree {m}: {sum(len(p) for p in P)} monomials removed")

    F0 = FormalMap(lam, [Series(r, N, t) for t in normal_tails], N)
    residual = verify_conjugacy(F, F0, Phi)
    if not residual.verified:
        raise CertificateViolation(f"normalizer left a residual at {residual.first_offender}")
    resonances = find_resonances(*lam, N) if r == 2 else []
    return PDResult("generic", F0, Phi, map_inverse(Phi), resonances, residual)


def solve_conjugator_linear_system(F: FormalMap, N: Optional[int] = None
                                   ) -> Tuple[FormalMap, FormalMap]:
    """Independent oracle: solve each degree as an exact linear system

    The unknowns at degree m are the non-resonant coefficients of P_m and
    the resonant coefficients of F0; the residual is affine in them, so the
    columns are read off from unit-vector evaluations.
    """
    N = F.truncation if N is None else N
    F = F.truncate(N)
    r, lam = F.var_count, F.eigenvalues
    Phi = FormalMap.identity(r, N)
    normal_tails: List[Dict[MultiIndex, Fraction]] = [{} for _ in range(r)]

    for m in range(2, N + 1):
        slots = [(k, index) for k in range(1, r + 1) for index in homogeneous_indices(r, m)]
        resonant = {s for s in slots if monomial_eigenvalue(lam, s[1]) == lam[s[0] - 1]}
        Phi_m = Phi.truncate(m)

        def residual_vector(values: Dict[Tuple[int, MultiIndex], Fraction]) -> List[Fraction]:
            P = [{} for _ in range(r)]
            tails = [dict(t) for t in normal_tails]
            for (k, index), value in values.items():
                if (k, index) in resonant:
                    tails[k - 1][index] = value
                else:
                    P[k - 1][index] = value
            Phi_new = _update_conjugator(Phi_m, P, m)
            F0 = FormalMap(lam, [Series(r, m, t) for t in tails], m)
            left = compose_to(Phi_new, F, m)
            right = compose_to(F0, Phi_new, m)
            return [left.coefficient(k, index) - right.coefficient(k, index) for k, index in slots]

        base = residual_vector({})
        columns = []
        for slot in slots:
            shifted = residual_vector({slot: Fraction(1)})
            columns.append([s - b for s, b in zip(shifted, base)])
        A = Matrix(len(slots), len(slots),
                   lambda i, j: Rational(columns[j][i].numerator, columns[j][i].denominator))
        rhs = Matrix([Rational(-b.numerator, b.denominator) for b in base])
        solution = A.LUsolve(rhs)

        P: List[Dict[MultiIndex, Fraction]] = [{} for _ in range(r)]
        for (k, index), value in zip(slots, solution):
            value = Fraction(int(value.p), int(value.q))
            if (k, index) in resonant:
                if value:
                    normal_tails[k - 1][index] = value
            elif value:
                P[k - 1][index] = value
        if any(P):
            Phi = _update_conjugator(Phi, P, m)

    return Phi, FormalMap(lam, [Series(r, N, t) for t in normal_tails], N)


def linearization_obstruction(lam, n: int) -> Scalar:
    """Forced y-coefficient of any Phi with Phi o F0 = L o Phi (second component)

    F0 = (lambda x, lambda^n y + x^n), L = (lambda x, lambda^n y). The
    coefficient equation at x^n reads b + lambda^n c = lambda^n c, so b = 0
    and no invertible intertwiner exists.
    """
    if n < 2:
        raise PreconditionError("n must be >= 2")
    lam = Fraction(lam)
    lam_s = Rational(lam.numerator, lam.denominator)
    x, y = symbols("x y")
    unknowns = {index: Symbol(f"a_{index[0]}_{index[1]}")
                for d in range(1, n + 1) for index in homogeneous_indices(2, d)}
    phi = sum(c * x ** i * y ** j for (i, j), c in unknowns.items())
    lhs = phi.subs({x: lam_s * x, y: lam_s ** n * y + x ** n}, simultaneous=True)
    difference = Poly(expand(lhs - lam_s ** n * phi), x, y)
    equations = [coeff for (i, j), coeff in difference.terms() if i + j <= n]
    solutions = linsolve(equations, list(unknowns.values()))
    if not solutions:
        raise CertificateViolation("intertwining system has no solution")
    values = dict(zip(unknowns.values(), next(iter(solutions))))
    forced = values[unknowns[(0, 1)]]
    if forced.free_symbols:
        raise CertificateViolation(f"y-coefficient is not forced: {forced}")
    forced = Rational(forced)
    return Fraction(int(forced.p), int(forced.q))


class PoincareDulacNormalizer:
    """Certified drivers for the repelling and semihyperbolic cases"""

    def __init__(self, ctx: PrimeContext, strict: bool = True):
        self.ctx = ctx
        self.strict = strict
        self.logger = logging.getLogger(__name__)

    def _working_frame(self, F: FormalMap, attracting: bool) -> Tuple[FormalMap, Scalar]:
        work = map_inverse(F) if attracting else F
        if attracting:
            self.logger.warning("Attracting input: normalizing F^-1 instead")
        q = find_integralizing_q(work, self.ctx)
        if q != 1:
            self.logger.warning(f"Rescaling by q = {q} to reach integral coefficients")
            work = conjugate_by_scaling(work, q)
        return work, q

    def _report_frame(self, F: FormalMap, result: PDResult, q: Scalar, inverted: bool,
                      mode: str) -> PDResult:
        Phi = conjugate_by_scaling(result.conjugator, 1 / q)
        F0 = conjugate_by_scaling(result.normal_form, 1 / q)
        if inverted:
            # Phi o F^-1 = G0 o Phi  =>  Phi o F = G0^-1 o Phi
            F0 = map_inverse(F0)
        residual = verify_conjugacy(F, F0, Phi)
        if not residual.verified:
            raise CertificateViolation(
                f"residual in the caller's frame at {residual.first_offender}")
        return PDResult(mode, F0, Phi, map_inverse(Phi),
                        find_resonances(*F.eigenvalues, F.truncation), residual,
                        result.certificates, result.normal_form_margins, q, inverted, result.n)

    def _check_margins(self, margins: List[Certificate], what: str):
        failing = [c for c in margins if not c.holds]
        if failing:
            worst = min(failing, key=lambda c: c.margin)
            message = (f"{what} margin {worst.margin} at component {worst.component}, "
                       f"index {worst.index}")
            if self.strict:
                raise CertificateViolation(message)
            self.logger.warning(message)

    def repelling(self, F: FormalMap, n: int, N: Optional[int] = None) -> PDResult:
        N = F.truncation if N is None else N
        if F.var_count != 2:
            raise PreconditionError("repelling driver needs a two-variable map")
        lam1, lam2 = F.eigenvalues
        if n < 2 or lam2 != lam1 ** n:
            raise PreconditionError(f"eigenvalues ({lam1}, {lam2}) are not of the form (l, l^{n})")
        v = valuation(lam1, self.ctx)
        if v == 0:
            raise UnsupportedCaseError(f"|lambda| = 1 is not supported (lambda = {lam1})")
        F = F.truncate(N)

        self.logger.info(f"Step 1: Working frame for lambda = {lam1}, n = {n}")
        work, q = self._working_frame(F, attracting=v > 0)

        self.logger.info("Step 2: Poincare-Dulac normalization")
        result = pd_normalize(work, N)
        G0 = result.normal_form
        extra = [(k, a) for k, a, _ in G0.nonlinear_terms() if (k, a) != (2, (n, 0))]
        if extra:
            raise CertificateViolation(f"repelling form has non-resonant terms at {extra}")

        self.logger.info("Step 3: Certificates")
        tau = TauSpec.mixed(work.eigenvalues[0], n)
        tau.validate(self.ctx, expanding=True)
        result.certificates = tail_margins(result.conjugator, tau, self.ctx)
        self._check_margins(result.certificates, "conjugator")
        result.n = n

        self.logger.info("Step 4: Back to the caller's frame")
        return self._report_frame(F, result, q, v > 0, "repelling")

    def semihyperbolic(self, F: FormalMap, N: Optional[int] = None) -> PDResult:
        N = F.truncation if N is None else N
        if F.var_count != 2:
            raise PreconditionError("semihyperbolic driver needs a two-variable map")
        lam1, lam = F.eigenvalues
        if lam1 != 1:
            raise PreconditionError(f"first eigenvalue must be 1, got {lam1}")
        v = valuation(lam, self.ctx)
        if v == 0:
            raise UnsupportedCaseError(f"|lambda| = 1 is not supported (lambda = {lam})")
        F = F.truncate(N)

        self.logger.info(f"Step 1: Working frame for lambda = {lam}")
        work, q = self._working_frame(F, attracting=v > 0)

        self.logger.info("Step 2: Poincare-Dulac normalization")
        result = pd_normalize(work, N)
        extra = [(k, a) for k, a, _ in result.normal_form.nonlinear_terms()
                 if not ((k == 1 and a[1] == 0) or (k == 2 and a[1] == 1))]
        if extra:
            raise CertificateViolation(f"semihyperbolic form has non-resonant terms at {extra}")

        self.logger.info("Step 3: Certificates")
        tau = TauSpec.maxes(work.eigenvalues[1])
        tau.validate(self.ctx, expanding=True)
        result.certificates = tail_margins(result.conjugator, tau, self.ctx)
        result.normal_form_margins = [Certificate(k, a, valuation(c, self.ctx))
                                      for k, a, c in result.normal_form.nonlinear_terms()]
        self._check_margins(result.certificates, "conjugator")
        self._check_margins(result.normal_form_margins, "normal form integrality")

        self.logger.info("Step 4: Back to the caller's frame")
        return self._report_frame(F, result, q, v > 0, "semihyperbolic")


def repelling_normalize(F: FormalMap, n: int, N: Optional[int], ctx: PrimeContext,
                        strict: bool = True) -> PDResult:
    return PoincareDulacNormalizer(ctx, strict).repelling(F, n, N)


def semihyperbolic_normalize(F: FormalMap, N: Optional[int], ctx: PrimeContext,
                             strict: bool = True) -> PDResult:
    return PoincareDulacNormalizer(ctx, strict).semihyperbolic(F, N)


def normalize_auto(F: FormalMap, N: Optional[int], ctx: PrimeContext,
                   strict: bool = True, maxdeg: int = 12) -> PDResult:
    """Route by eigenvalue pattern; generic runs claim no analyticity certificate"""
    if F.var_count != 2:
        raise PreconditionError("two-variable map expected")
    kind = classify_eigenvalues(*F.eigenvalues, ctx, maxdeg)
    if kind.kind == "saddle":
        raise UnsupportedCaseError(SADDLE_MESSAGE)
    if kind.kind == "repelling":
        return repelling_normalize(F, kind.n, N, ctx, strict)
    if kind.kind == "semihyperbolic":
        return semihyperbolic_normalize(F, N, ctx, strict)
    logger.warning(f"Eigenvalues {kind.kind}: generic normalization, "
                   "no analyticity certificate is claimed")
    return pd_normalize(F, N)


def reduce_resonant_constant(F0: FormalMap, n: Optional[int] = None
                             ) -> Tuple[FormalMap, FormalMap]:
    """(lambda x, lambda^n y + C x^n) -> (lambda x, lambda^n y + x^n) via L = diag(1, 1/C)

    Returns the reduced map G and L with L o F0 = G o L.
    """
    if F0.var_count != 2:
        raise PreconditionError("two-variable map expected")
    lam1, lam2 = F0.eigenvalues
    if n is None:
        n = next((k for k in range(2, F0.truncation + 1) if lam1 ** k == lam2), None)
    if n is None or lam1 ** n != lam2:
        raise PreconditionError(f"eigenvalues ({lam1}, {lam2}) are not of the form (l, l^n)")
    support = [(k, a) for k, a, _ in F0.nonlinear_terms()]
    if any(s != (2, (n, 0)) for s in support):
        raise PreconditionError(f"not a repelling PD form: terms at {support}")
    C = F0.coefficient(2, (n, 0))
    N = F0.truncation
    if C == 0:
        return F0, FormalMap.identity(2, N)
    reduced = FormalMap(F0.eigenvalues, [Series.zero(2, N), Series(2, N, {(n, 0): 1})], N)
    return reduced, FormalMap.linear([1, 1 / C], N)
