#!/usr/bin/env python3
"""
Sparse truncated power series and formal maps

Series in one or two variables are sympy polynomials over QQ with one
extra grading generator t: the monomial x^a y^b is stored as
x^a y^b t^(a+b), so the ring_series truncation in t is truncation in
total degree. Every operation is exact through the truncation degree
and discards higher terms. A FormalMap keeps its diagonal linear part as
a list of eigenvalues and its nonlinear part as one tail Series per
component.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from sympy.polys.domains import QQ
from sympy.polys.ring_series import rs_mul, rs_pow, rs_series_reversion, rs_subs, rs_trunc
from sympy.polys.rings import PolyElement, ring

from normal_form_errors import DomainError, PreconditionError
from padic_field import (NormValue, PrimeContext, Scalar, format_scalar,
                         parse_scalar, valuation)

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]

# graded rings, keyed by variable count; the last generator is t
GRADED_RINGS = {1: ring("x, t", QQ)[0], 2: ring("x, y, t", QQ)[0]}
# ungraded ring for one-variable reversion: solve h(x) = y for x
REVERSION_RING, REV_X, REV_Y = ring("x, y", QQ)


def degree(index: MultiIndex) -> int:
    """Total degree |a| of a multi-index"""
    return sum(index)


def unit_index(var_count: int, k: int) -> MultiIndex:
    """Index of the monomial x_k (k is 1-based)"""
    return tuple(1 if i == k - 1 else 0 for i in range(var_count))


def homogeneous_indices(var_count: int, d: int) -> List[MultiIndex]:
    """All indices of total degree d, first component descending"""
    if var_count == 1:
        return [(d,)]
    return [(i, d - i) for i in range(d, -1, -1)]


def indices_up_to(var_count: int, low: int, high: int) -> List[MultiIndex]:
    return [a for d in range(low, high + 1) for a in homogeneous_indices(var_count, d)]


def _check_var_count(var_count: int):
    if var_count not in (1, 2):
        raise PreconditionError(f"only one or two variables are supported, got {var_count}")


def to_qq(value):
    value = Fraction(value)
    return QQ(value.numerator, value.denominator)


def from_qq(value) -> Fraction:
    return Fraction(int(value.numerator), int(value.denominator))


class Series:
    """Truncated power series in one or two variables"""

    __slots__ = ("var_count", "truncation", "poly")

    def __init__(self, var_count: int, truncation: int,
                 coeffs: Optional[Dict[MultiIndex, object]] = None):
        _check_var_count(var_count)
        if truncation < 0:
            raise PreconditionError(f"truncation must be >= 0, got {truncation}")
        terms = {}
        for index, value in (coeffs or {}).items():
            index = tuple(int(i) for i in index)
            if len(index) != var_count or min(index) < 0:
                raise PreconditionError(f"bad index {index} for {var_count} variable(s)")
            value = Fraction(value)
            if value and degree(index) <= truncation:
                terms[index + (degree(index),)] = to_qq(value)
        self.var_count = var_count
        self.truncation = truncation
        self.poly = GRADED_RINGS[var_count].from_dict(terms)

    @classmethod
    def _wrap(cls, var_count: int, truncation: int, poly: PolyElement) -> "Series":
        # internal constructor: poly is graded and already truncated
        series = cls.__new__(cls)
        series.var_count = var_count
        series.truncation = truncation
        series.poly = poly
        return series

    @property
    def grading(self) -> PolyElement:
        return self.poly.ring.gens[-1]

    @classmethod
    def zero(cls, var_count: int, truncation: int) -> "Series":
        _check_var_count(var_count)
        return cls._wrap(var_count, truncation, GRADED_RINGS[var_count].zero)

    @classmethod
    def constant(cls, value, var_count: int, truncation: int) -> "Series":
        return cls(var_count, truncation, {(0,) * var_count: value})

    @classmethod
    def variable(cls, k: int, var_count: int, truncation: int) -> "Series":
        return cls(var_count, truncation, {unit_index(var_count, k): 1})

    def coefficient(self, index: MultiIndex) -> Fraction:
        index = tuple(index)
        value = self.poly.get(index + (degree(index),))
        return from_qq(value) if value else Fraction(0)

    def items(self) -> List[Tuple[MultiIndex, Fraction]]:
        terms = [(monom[:-1], from_qq(c)) for monom, c in self.poly.items()]
        return sorted(terms, key=lambda item: (degree(item[0]), tuple(-i for i in item[0])))

    def is_zero(self) -> bool:
        return not self.poly

    def min_degree(self) -> Optional[int]:
        return min((monom[-1] for monom in self.poly), default=None)

    def degree_range(self, low: int, high: int) -> "Series":
        """Terms with low <= |a| <= high"""
        kept = {monom: c for monom, c in self.poly.items() if low <= monom[-1] <= high}
        return Series._wrap(self.var_count, self.truncation, self.poly.ring.from_dict(kept))

    def truncate(self, truncation: int) -> "Series":
        if truncation > self.truncation:
            raise PreconditionError(
                f"cannot raise truncation from {self.truncation} to {truncation}")
        return Series._wrap(self.var_count, truncation,
                            rs_trunc(self.poly, self.grading, truncation + 1))

    def _pair(self, other: "Series") -> int:
        if not isinstance(other, Series):
            raise PreconditionError(f"expected a Series, got {type(other).__name__}")
        if other.var_count != self.var_count:
            raise PreconditionError(
                f"variable count mismatch: {self.var_count} and {other.var_count}")
        return min(self.truncation, other.truncation)

    def __add__(self, other: "Series") -> "Series":
        n = self._pair(other)
        return Series._wrap(self.var_count, n, rs_trunc(self.poly + other.poly, self.grading, n + 1))

    def __neg__(self) -> "Series":
        return Series._wrap(self.var_count, self.truncation, -self.poly)

    def __sub__(self, other: "Series") -> "Series":
        return self + (-other)

    def scale(self, factor) -> "Series":
        return Series._wrap(self.var_count, self.truncation, self.poly.mul_ground(to_qq(factor)))

    def __mul__(self, other: "Series") -> "Series":
        return series_multiply(self, other)

    def power(self, k: int) -> "Series":
        if k < 0:
            raise PreconditionError("negative powers are not series")
        if k == 0:
            return Series.constant(1, self.var_count, self.truncation)
        return Series._wrap(self.var_count, self.truncation,
                            rs_pow(self.poly, k, self.grading, self.truncation + 1))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Series):
            return NotImplemented
        return (self.var_count == other.var_count and self.truncation == other.truncation
                and self.poly == other.poly)

    def __hash__(self):
        return hash((self.var_count, self.truncation, frozenset(self.poly.items())))

    def __repr__(self) -> str:
        terms = " + ".join(f"{format_scalar(c)}*x^{list(a)}" for a, c in self.items()) or "0"
        return f"Series({terms}; N={self.truncation})"

    def compose(self, components: Sequence["Series"]) -> "Series":
        """Substitute the given series for the variables (they must vanish at 0)"""
        return _compose(self, components)

    def substitute(self, inner: "Series") -> "Series":
        return series_substitute(self, inner)


def series_multiply(f: Series, g: Series) -> Series:
    """Exact product truncated at min(N_f, N_g)"""
    n = f._pair(g)
    return Series._wrap(f.var_count, n, rs_mul(f.poly, g.poly, f.grading, n + 1))


def _check_inner(components: Sequence[Series]):
    for comp in components:
        if comp.coefficient((0,) * comp.var_count):
            raise PreconditionError("substituted series must have zero constant term")


def _compose(outer: Series, components: Sequence[Series]) -> Series:
    if len(components) != outer.var_count:
        raise PreconditionError(
            f"{outer.var_count} series needed for substitution, got {len(components)}")
    _check_inner(components)
    target = components[0].var_count
    if any(c.var_count != target for c in components):
        raise PreconditionError("substituted series live in different variable counts")
    n = min([outer.truncation] + [c.truncation for c in components])
    R = GRADED_RINGS[target]
    t, prec = R.gens[-1], n + 1
    inner = [c.truncate(n).poly for c in components]

    # group the outer coefficients by the exponent of the first variable
    rows: Dict[int, Dict[int, Fraction]] = {}
    for a, c in outer.items():
        if degree(a) <= n:
            rest = a[1] if outer.var_count == 2 else 0
            rows.setdefault(a[0], {})[rest] = c
    if not rows:
        return Series.zero(target, n)

    powers = [R.one]
    if outer.var_count == 2:
        top = max(j for row in rows.values() for j in row)
        for _ in range(top):
            powers.append(rs_mul(powers[-1], inner[1], t, prec))

    def row_poly(i: int) -> PolyElement:
        acc = R.zero
        for j, c in rows.get(i, {}).items():
            acc = acc + powers[j].mul_ground(to_qq(c))
        return acc

    # Horner in the first variable
    top_i = max(rows)
    result = row_poly(top_i)
    for i in range(top_i - 1, -1, -1):
        result = rs_mul(result, inner[0], t, prec) + row_poly(i)
    return Series._wrap(target, n, rs_trunc(result, t, prec))


def _ungraded(series: Series, ring_) -> PolyElement:
    """The same terms in an ungraded ring whose first generators are x (and y)"""
    width = ring_.ngens
    terms = {}
    for monom, c in series.poly.items():
        exponents = monom[:-1]
        terms[exponents + (0,) * (width - len(exponents))] = c
    return ring_.from_dict(terms)


def series_substitute(outer: Series, inner: Series) -> Series:
    """outer(inner(x)) for one-variable series, inner(0) = 0"""
    if outer.var_count != 1 or inner.var_count != 1:
        raise PreconditionError("series_substitute works on one-variable series")
    if inner.coefficient((0,)):
        raise PreconditionError("inner series must have zero constant term")
    n = min(outer.truncation, inner.truncation)
    R = GRADED_RINGS[1]
    x, t = R.gens
    # outer without grading, inner graded: t then counts the degree of the result
    plain = _ungraded(outer, R)
    result = rs_subs(plain, {x: inner.truncate(n).poly}, t, n + 1)
    return Series._wrap(1, n, rs_trunc(result, t, n + 1))


def add_components(first: Sequence[Series], second: Sequence[Series]) -> Tuple[Series, ...]:
    """Componentwise sum of two maps given as raw component tuples"""
    if len(first) != len(second):
        raise PreconditionError("maps of different dimensions")
    return tuple(f + g for f, g in zip(first, second))


def compose_components(outer: Sequence[Series], inner: Sequence[Series]) -> Tuple[Series, ...]:
    return tuple(f.compose(inner) for f in outer)


class FormalMap:
    """Formal map with diagonal linear part: component k is lambda_k x_k + tail_k"""

    __slots__ = ("var_count", "truncation", "eigenvalues", "tails")

    def __init__(self, eigenvalues: Sequence, tails: Optional[Sequence] = None,
                 truncation: int = 2):
        var_count = len(eigenvalues)
        _check_var_count(var_count)
        eigenvalues = tuple(Fraction(e) for e in eigenvalues)
        if any(e == 0 for e in eigenvalues):
            raise PreconditionError("eigenvalues must be nonzero")
        if tails is None:
            tails = [Series.zero(var_count, truncation) for _ in range(var_count)]
        if len(tails) != var_count:
            raise PreconditionError(f"expected {var_count} tails, got {len(tails)}")
        clean = []
        for tail in tails:
            if not isinstance(tail, Series):
                tail = Series(var_count, truncation, tail)
            if tail.var_count != var_count:
                raise PreconditionError("tail lives in the wrong number of variables")
            if tail.truncation < truncation:
                raise PreconditionError(
                    f"tail truncation {tail.truncation} below map truncation {truncation}")
            low = tail.min_degree()
            if low is not None and low < 2:
                raise PreconditionError("tails must start in degree 2")
            clean.append(tail.truncate(truncation))
        self.var_count = var_count
        self.truncation = truncation
        self.eigenvalues = eigenvalues
        self.tails = tuple(clean)

    @classmethod
    def identity(cls, var_count: int, truncation: int) -> "FormalMap":
        return cls([1] * var_count, None, truncation)

    @classmethod
    def linear(cls, eigenvalues: Sequence, truncation: int) -> "FormalMap":
        return cls(eigenvalues, None, truncation)

    @classmethod
    def from_components(cls, components: Sequence[Series]) -> "FormalMap":
        """Split full components into diagonal linear part and tails"""
        var_count = len(components)
        truncation = min(c.truncation for c in components)
        eigenvalues, tails = [], []
        for k, comp in enumerate(components, start=1):
            if comp.var_count != var_count:
                raise PreconditionError("component lives in the wrong number of variables")
            if comp.coefficient((0,) * var_count):
                raise PreconditionError(f"component {k} does not fix the origin")
            for other in range(1, var_count + 1):
                if other != k and comp.coefficient(unit_index(var_count, other)):
                    raise PreconditionError(f"linear part is not diagonal (component {k})")
            eigenvalues.append(comp.coefficient(unit_index(var_count, k)))
            tails.append(comp.degree_range(2, truncation).truncate(truncation))
        if any(e == 0 for e in eigenvalues):
            raise PreconditionError("linear part is singular")
        return cls(eigenvalues, tails, truncation)

    def component(self, k: int) -> Series:
        """Full component k (1-based), linear term included"""
        lin = {unit_index(self.var_count, k): self.eigenvalues[k - 1]}
        return self.tails[k - 1] + Series(self.var_count, self.truncation, lin)

    def components(self) -> Tuple[Series, ...]:
        return tuple(self.component(k) for k in range(1, self.var_count + 1))

    def coefficient(self, k: int, index: MultiIndex) -> Fraction:
        if degree(index) == 1:
            return self.eigenvalues[k - 1] if tuple(index) == unit_index(self.var_count, k) else Fraction(0)
        return self.tails[k - 1].coefficient(index)

    def nonlinear_terms(self) -> Iterator[Tuple[int, MultiIndex, Fraction]]:
        for k, tail in enumerate(self.tails, start=1):
            for index, value in tail.items():
                yield k, index, value

    def is_linear(self) -> bool:
        return all(t.is_zero() for t in self.tails)

    def truncate(self, truncation: int) -> "FormalMap":
        return FormalMap(self.eigenvalues, [t.truncate(truncation) for t in self.tails], truncation)

    def compose(self, other: "FormalMap") -> "FormalMap":
        return map_compose(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FormalMap):
            return NotImplemented
        return (self.truncation == other.truncation and self.eigenvalues == other.eigenvalues
                and self.tails == other.tails)

    def __repr__(self) -> str:
        eig = ", ".join(format_scalar(e) for e in self.eigenvalues)
        return f"FormalMap(eigenvalues=({eig}), terms={len(list(self.nonlinear_terms()))}, N={self.truncation})"

    def to_dict(self) -> Dict:
        return {
            "vars": self.var_count,
            "truncation": self.truncation,
            "eigenvalues": [format_scalar(e) for e in self.eigenvalues],
            "terms": [{"component": k, "index": list(index), "value": format_scalar(value)}
                      for k, index, value in self.nonlinear_terms()],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "FormalMap":
        try:
            var_count = int(data["vars"])
            truncation = int(data["truncation"])
            eigenvalues = [parse_scalar(e) for e in data["eigenvalues"]]
            terms = data.get("terms", [])
        except (KeyError, TypeError) as e:
            raise PreconditionError(f"malformed map payload: {e}")
        if len(eigenvalues) != var_count:
            raise PreconditionError("eigenvalue count does not match 'vars'")
        tails: List[Dict[MultiIndex, Fraction]] = [{} for _ in range(var_count)]
        for term in terms:
            k = int(term["component"])
            index = tuple(int(i) for i in term["index"])
            if not 1 <= k <= var_count or len(index) != var_count:
                raise PreconditionError(f"bad term {term}")
            if degree(index) < 2:
                raise PreconditionError(
                    f"term {term} is constant or linear; the linear part is given by 'eigenvalues'")
            if degree(index) > truncation:
                raise PreconditionError(f"term {term} exceeds truncation {truncation}")
            tails[k - 1][index] = tails[k - 1].get(index, 0) + parse_scalar(term["value"])
        return cls(eigenvalues, [Series(var_count, truncation, t) for t in tails], truncation)


def _same_shape(F: FormalMap, G: FormalMap):
    if F.var_count != G.var_count:
        raise PreconditionError(f"dimension mismatch: {F.var_count} and {G.var_count}")
    if F.truncation != G.truncation:
        raise PreconditionError(f"truncation mismatch: {F.truncation} and {G.truncation}")


def map_compose(F: FormalMap, G: FormalMap) -> FormalMap:
    """F o G, exact through the common truncation"""
    _same_shape(F, G)
    inner = G.components()
    return FormalMap.from_components([F.component(k).compose(inner)
                                      for k in range(1, F.var_count + 1)])


def compose_to(F: FormalMap, G: FormalMap, truncation: int) -> FormalMap:
    """F o G computed only through the given degree"""
    return map_compose(F.truncate(truncation), G.truncate(truncation))


def map_inverse(F: FormalMap) -> FormalMap:
    """Compositional inverse, solved one degree at a time"""
    r, n = F.var_count, F.truncation
    inverse_eigs = [1 / e for e in F.eigenvalues]
    tails: List[Dict[MultiIndex, Fraction]] = [{} for _ in range(r)]
    for d in range(2, n + 1):
        G = FormalMap(inverse_eigs, [Series(r, d, t) for t in tails], d)
        residual = compose_to(F, G, d)
        for k in range(1, r + 1):
            for index in homogeneous_indices(r, d):
                e = residual.coefficient(k, index)
                if e:
                    tails[k - 1][index] = -e / F.eigenvalues[k - 1]
    return FormalMap(inverse_eigs, [Series(r, n, t) for t in tails], n)


def conjugate_by_scaling(F: FormalMap, q) -> FormalMap:
    """L_q^{-1} o F o L_q with L_q(x) = q x: coefficient a picks up q^(|a|-1)"""
    q = Fraction(q)
    if q == 0:
        raise DomainError("scaling factor q must be nonzero")
    tails = [Series(F.var_count, F.truncation, {a: c * q ** (degree(a) - 1) for a, c in tail.items()})
             for tail in F.tails]
    return FormalMap(F.eigenvalues, tails, F.truncation)


def integralizing_exponent(F: FormalMap, ctx: PrimeContext) -> int:
    s = 0
    for _, index, value in F.nonlinear_terms():
        v = valuation(value, ctx)
        s = max(s, -(v // (degree(index) - 1)))
    return s


def find_integralizing_q(F: FormalMap, ctx: PrimeContext) -> Scalar:
    """Smallest q = p^s making every nonlinear coefficient integral after scaling"""
    return Fraction(ctx.p) ** integralizing_exponent(F, ctx)


@dataclass
class ResidualTerm:
    """Nonzero coefficient of a conjugacy residual"""
    component: int
    index: MultiIndex
    value: Scalar

    def to_dict(self) -> Dict:
        return {"component": self.component, "index": list(self.index),
                "value": format_scalar(self.value)}


@dataclass
class ConjugacyResidual:
    """Phi o F - F0 o Phi through the truncation degree"""
    truncation: int
    terms: List[ResidualTerm] = field(default_factory=list)

    @property
    def verified(self) -> bool:
        return not self.terms

    @property
    def first_offender(self) -> Optional[ResidualTerm]:
        return self.terms[0] if self.terms else None

    def to_list(self) -> List[Dict]:
        return [t.to_dict() for t in self.terms]


def residual_between(left: FormalMap, right: FormalMap) -> ConjugacyResidual:
    _same_shape(left, right)
    terms = []
    for k in range(1, left.var_count + 1):
        diff = left.component(k) - right.component(k)
        terms.extend(ResidualTerm(k, index, value) for index, value in diff.items())
    terms.sort(key=lambda t: (degree(t.index), t.component, tuple(-i for i in t.index)))
    return ConjugacyResidual(left.truncation, terms)


def verify_conjugacy(F: FormalMap, F0: FormalMap, Phi: FormalMap) -> ConjugacyResidual:
    """Exact residual of Phi o F = F0 o Phi; empty means verified"""
    _same_shape(F, F0)
    _same_shape(F, Phi)
    residual = residual_between(map_compose(Phi, F), map_compose(F0, Phi))
    if not residual.verified:
        offender = residual.first_offender
        logger.debug(f"Conjugacy residual at component {offender.component}, "
                     f"index {offender.index}: {offender.value}")
    return residual


@dataclass
class GrowthCertificate:
    """|coefficient_a| <= bound^|a| for every checked term, so the series
    converges on the polydisc of the given radius"""
    bound: NormValue
    radius: NormValue
    exponent: int
    terms_checked: int

    def to_dict(self) -> Dict:
        return {"bound": str(self.bound), "radius": str(self.radius),
                "terms_checked": self.terms_checked}


def growth_certificate(obj: Union[Series, FormalMap], ctx: PrimeContext) -> GrowthCertificate:
    if isinstance(obj, FormalMap):
        terms = [(index, value) for _, index, value in obj.nonlinear_terms()]
    else:
        terms = [(index, value) for index, value in obj.items() if degree(index) >= 1]
    e = 0
    for index, value in terms:
        v = valuation(value, ctx)
        e = max(e, -(v // degree(index)))
    return GrowthCertificate(NormValue(ctx.p, e), NormValue(ctx.p, -e), e, len(terms))


def one_variable_inverse(h: Series) -> Series:
    """Compositional inverse of a one-variable series with h(0) = 0, h'(0) != 0"""
    if h.var_count != 1:
        raise PreconditionError("one_variable_inverse works on one-variable series")
    if h.coefficient((0,)):
        raise PreconditionError("series does not fix the origin")
    if not h.coefficient((1,)):
        raise PreconditionError("series has a vanishing linear term")
    plain = _ungraded(h, REVERSION_RING)
    reverted = rs_series_reversion(plain, REV_X, h.truncation + 1, REV_Y)
    return Series(1, h.truncation, {(monom[1],): from_qq(c) for monom, c in reverted.items()})
