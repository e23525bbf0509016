#!/usr/bin/env python3
"""
One-variable formal normal forms

Reduces a tangent-to-identity series f = x + rho x^m + ... to
x + rho x^m + mu x^(2m-1), decides equivalence of two such series through
the scaling relation on (rho, mu), and checks the leading-centralizer
property for maps commuting with f.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional, Tuple

from formal_series import Series, one_variable_inverse
from normal_form_errors import CertificateViolation, PreconditionError
from padic_field import PrimeContext, Scalar, format_scalar, is_jth_power, parse_scalar

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OneDNormalForm:
    """f_{m,rho,mu}(x) = x + rho x^m + mu x^(2m-1)"""
    m: int
    rho: Scalar
    mu: Scalar

    def __post_init__(self):
        if self.m < 2:
            raise PreconditionError(f"m must be >= 2, got {self.m}")
        if self.rho == 0:
            raise PreconditionError("rho must be nonzero")

    def series(self, truncation: int) -> Series:
        return Series(1, truncation, {(1,): 1, (self.m,): self.rho, (2 * self.m - 1,): self.mu})

    def to_dict(self) -> Dict:
        return {"m": self.m, "rho": format_scalar(self.rho), "mu": format_scalar(self.mu)}

    @classmethod
    def from_dict(cls, data: Dict) -> "OneDNormalForm":
        return cls(int(data["m"]), parse_scalar(data["rho"]), parse_scalar(data["mu"]))


def leading_term(f: Series) -> Tuple[int, Scalar]:
    """Degree and coefficient of the first nonlinear term of x + O(x^2)"""
    if f.var_count != 1:
        raise PreconditionError("expected a one-variable series")
    if f.coefficient((0,)) != 0 or f.coefficient((1,)) != 1:
        raise PreconditionError("series is not tangent to the identity")
    tail = f.degree_range(2, f.truncation)
    if tail.is_zero():
        raise PreconditionError("series is already linear (f = x)")
    m = tail.min_degree()
    return m, tail.coefficient((m,))


def normal_form_1d(f: Series, N: Optional[int] = None) -> Tuple[OneDNormalForm, Series]:
    """Return (m, rho, mu) and h with h o f o h^-1 = f_{m,rho,mu} through degree N

    Degree D = d + m - 1 of h o f - f0 o h changes by (d - m) rho h_d when
    h_d is adjusted, so each h_d is solved directly; at d = m the equation
    is singular and the degree-(2m-1) residue becomes mu.
    """
    N = f.truncation if N is None else N
    if N > f.truncation:
        raise PreconditionError(f"series known only through degree {f.truncation}, asked for {N}")
    f = f.truncate(N)
    m, rho = leading_term(f)
    if 2 * m - 1 > N:
        raise PreconditionError(
            f"insufficient truncation: need N >= {2 * m - 1} for m = {m}, got {N}")

    h: Dict[Tuple[int, ...], Fraction] = {(1,): Fraction(1)}
    mu = Fraction(0)
    for D in range(m + 1, N + 1):
        d = D - m + 1
        hs = Series(1, D, h)
        f0 = OneDNormalForm(m, rho, mu).series(D)
        residual = (hs.substitute(f.truncate(D)) - f0.substitute(hs)).coefficient((D,))
        if d == m:
            mu = residual
        elif residual:
            h[(d,)] = -residual / ((d - m) * rho)
    form = OneDNormalForm(m, rho, mu)
    h_series = Series(1, N, h)

    check = h_series.substitute(f) - form.series(N).substitute(h_series)
    if not check.is_zero():
        raise CertificateViolation(f"one-variable residual not empty: {check}")
    logger.debug(f"Normal form m={m}, rho={rho}, mu={mu} through degree {N}")
    return form, h_series


@dataclass
class OneDVerdict:
    """Outcome of a one-variable equivalence test"""
    equivalent: bool
    reason: str
    first: OneDNormalForm
    second: OneDNormalForm

    def to_dict(self) -> Dict:
        return {"verdict": "equivalent" if self.equivalent else "inequivalent",
                "reason": self.reason,
                "normal_forms": [self.first.to_dict(), self.second.to_dict()]}


def forms_equivalent(first: OneDNormalForm, second: OneDNormalForm,
                     ctx: PrimeContext) -> Tuple[bool, str]:
    """Scaling test: c^(m-1) = rho/rho' must be solvable and mu = mu' (rho/rho')^2"""
    if first.m != second.m:
        return False, f"leading degrees differ ({first.m} vs {second.m})"
    ratio = first.rho / second.rho
    if not is_jth_power(ratio, first.m - 1, ctx):
        return False, f"rho ratio {ratio} is not a {first.m - 1}-th power in Q_{ctx.p}"
    if first.mu != second.mu * ratio ** 2:
        return False, f"mu mismatch: {first.mu} vs {second.mu * ratio ** 2}"
    return True, "normal forms related by scaling"


def equiv_1d(f: Series, g: Series, N: int, ctx: PrimeContext) -> OneDVerdict:
    first, _ = normal_form_1d(f, N)
    second, _ = normal_form_1d(g, N)
    equivalent, reason = forms_equivalent(first, second, ctx)
    return OneDVerdict(equivalent, reason, first, second)


@dataclass
class CentralizerResult:
    """Either zeta = h'(0) or the first degree where h o f != f o h"""
    zeta: Optional[Scalar] = None
    violation_degree: Optional[int] = None

    @property
    def commutes(self) -> bool:
        return self.violation_degree is None


def leading_centralizer(h: Series, f: Series, N: Optional[int] = None) -> CentralizerResult:
    """If h commutes with f = x + A x^m + ..., h = zeta x mod x^m with zeta^(m-1) = 1"""
    N = min(h.truncation, f.truncation) if N is None else N
    h, f = h.truncate(N), f.truncate(N)
    m, _ = leading_term(f)
    if h.coefficient((0,)) != 0:
        raise PreconditionError("h must fix the origin")
    zeta = h.coefficient((1,))
    if zeta == 0:
        raise PreconditionError("h is not invertible")

    diff = h.substitute(f) - f.substitute(h)
    if not diff.is_zero():
        return CentralizerResult(violation_degree=diff.min_degree())

    low = h.degree_range(2, m - 1)
    if not low.is_zero() or zeta ** (m - 1) != 1:
        raise CertificateViolation(
            f"commuting h fails h = zeta x mod x^{m} with zeta^{m - 1} = 1")
    return CentralizerResult(zeta=zeta)


def conjugate_series(f: Series, k: Series) -> Series:
    """k o f o k^-1 for one-variable series"""
    return k.substitute(f.substitute(one_variable_inverse(k)))
