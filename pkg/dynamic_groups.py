#!/usr/bin/env python3
"""
Dynamic coefficient bounds and the groups they define

A tau-descriptor assigns to each multi-index a (of total degree >= t) one
scalar per component. A map belongs to G(tau) when tau_k(a) [F]^k_a is
integral for every coefficient. The descriptor is "dynamic" when the
bound survives composition; check_dynamic verifies the defining
inequality over every decomposition up to a total-degree bound.
"""

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from sympy.utilities.iterables import partitions

from formal_series import FormalMap, MultiIndex, degree, indices_up_to, unit_index
from normal_form_errors import PreconditionError
from padic_field import (PrimeContext, Scalar, Valuation, format_scalar, legendre_valuation,
                         parse_scalar, valuation)

logger = logging.getLogger(__name__)

VARIANTS = ("factorial", "maxes", "mixed", "sigma", "table")
DEFAULT_ENUMERATION_BOUND = 6


@dataclass(frozen=True)
class TauSpec:
    """Descriptor of a coefficient-bounding function tau: A_t -> K^r"""
    variant: str
    var_count: int = 1
    t: int = 1
    lam: Optional[Scalar] = None
    n: Optional[int] = None
    q: Optional[Scalar] = None
    m: Optional[int] = None
    exponents: Tuple[Tuple[MultiIndex, int], ...] = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise PreconditionError(f"unknown tau variant {self.variant!r}")
        if self.var_count not in (1, 2) or self.t < 1:
            raise PreconditionError(f"bad dimensions r={self.var_count}, t={self.t}")
        if self.variant in ("maxes", "mixed", "table") and not self.lam:
            raise PreconditionError(f"{self.variant} needs a nonzero lambda")
        if self.variant == "mixed" and (self.n is None or self.n < 1):
            raise PreconditionError("mixed needs n >= 1")
        if self.variant == "sigma" and (not self.q or self.m is None or self.m < 2):
            raise PreconditionError("sigma needs q != 0 and m >= 2")

    @classmethod
    def factorial(cls) -> "TauSpec":
        return cls("factorial", 1, 1)

    @classmethod
    def maxes(cls, lam) -> "TauSpec":
        return cls("maxes", 2, 2, lam=Fraction(lam))

    @classmethod
    def mixed(cls, lam, n: int) -> "TauSpec":
        return cls("mixed", 2, 2, lam=Fraction(lam), n=n)

    @classmethod
    def sigma(cls, q, m: int) -> "TauSpec":
        return cls("sigma", 1, m + 1, q=Fraction(q), m=m)

    @classmethod
    def table(cls, lam, exponents: Dict[MultiIndex, int]) -> "TauSpec":
        """tau(a) = lam**exponents[a] in every component"""
        if not exponents:
            raise PreconditionError("table needs at least one entry")
        items = tuple(sorted((tuple(a), int(e)) for a, e in exponents.items()))
        var_count = len(items[0][0])
        t = min(degree(a) for a, _ in items)
        return cls("table", var_count, t, lam=Fraction(lam), exponents=items)

    def exponent_table(self) -> Dict[MultiIndex, int]:
        return dict(self.exponents)

    def validate(self, ctx: PrimeContext, expanding: bool = False):
        """Norm conditions: sigma needs |q| <= 1; drivers need |lambda| > 1"""
        if self.variant == "sigma" and valuation(self.q, ctx) < 0:
            raise PreconditionError(f"sigma needs |q| <= 1, got q = {self.q}")
        if expanding and self.variant in ("maxes", "mixed") and valuation(self.lam, ctx) >= 0:
            raise PreconditionError(f"{self.variant} needs |lambda| > 1, got lambda = {self.lam}")

    def to_dict(self) -> Dict:
        data: Dict = {"variant": self.variant, "t": self.t}
        if self.lam is not None:
            data["lambda"] = format_scalar(self.lam)
        if self.n is not None:
            data["n"] = self.n
        if self.q is not None:
            data["q"] = format_scalar(self.q)
        if self.m is not None:
            data["m"] = self.m
        if self.variant == "table":
            data["exponents"] = [{"index": list(a), "exponent": e} for a, e in self.exponents]
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "TauSpec":
        try:
            variant = data["variant"]
            if variant == "factorial":
                return cls.factorial()
            if variant == "maxes":
                spec = cls.maxes(parse_scalar(data["lambda"]))
            elif variant == "mixed":
                spec = cls.mixed(parse_scalar(data["lambda"]), int(data["n"]))
            elif variant == "sigma":
                spec = cls.sigma(parse_scalar(data["q"]), int(data["m"]))
            elif variant == "table":
                spec = cls.table(parse_scalar(data["lambda"]),
                                 {tuple(e["index"]): e["exponent"] for e in data["exponents"]})
            else:
                raise PreconditionError(f"unknown tau variant {variant!r}")
        except (KeyError, TypeError) as e:
            raise PreconditionError(f"malformed tau descriptor: {e}")
        if "t" in data and int(data["t"]) != spec.t:
            spec = cls(spec.variant, spec.var_count, int(data["t"]), spec.lam, spec.n,
                       spec.q, spec.m, spec.exponents)
        return spec


def sigma_exponent(n: int, m: int) -> int:
    """(n + 1) + m floor((n - 2) / (m - 1))"""
    return (n + 1) + m * ((n - 2) // (m - 1))


def tau_exponent(spec: TauSpec, index: MultiIndex, component: int) -> int:
    """Exponent e with tau_k(a) = base**e for the power-type variants"""
    if spec.variant == "maxes":
        return max(1, index[1])
    if spec.variant == "mixed":
        linear = index[0] + spec.n * index[1]
        return linear if component == 1 else max(spec.n, linear)
    if spec.variant == "sigma":
        return sigma_exponent(degree(index), spec.m)
    if spec.variant == "table":
        table = spec.exponent_table()
        if index not in table:
            raise PreconditionError(f"tau table has no entry for {index}")
        return table[index]
    raise PreconditionError(f"{spec.variant} is not a power-type descriptor")


def tau_eval(spec: TauSpec, index: MultiIndex, component: int = 1) -> Scalar:
    index = tuple(index)
    if len(index) != spec.var_count:
        raise PreconditionError(f"index {index} does not match r = {spec.var_count}")
    if not 1 <= component <= spec.var_count:
        raise PreconditionError(f"component {component} out of range")
    if degree(index) < spec.t:
        raise PreconditionError(f"index {index} lies below t = {spec.t}")
    if spec.variant == "factorial":
        return Fraction(math.factorial(degree(index)))
    base = spec.q if spec.variant == "sigma" else spec.lam
    return base ** tau_exponent(spec, index, component)


def tau_valuation(spec: TauSpec, index: MultiIndex, component: int, ctx: PrimeContext) -> Valuation:
    if spec.variant == "factorial":
        return legendre_valuation(degree(index), ctx.p)
    base = spec.q if spec.variant == "sigma" else spec.lam
    return valuation(base, ctx) * tau_exponent(spec, index, component)


Part = Tuple[int, MultiIndex]


@dataclass(frozen=True)
class ComponentSplit:
    """a^(k) = a_0 + sum a_i, with index b_i attached to each part"""
    a0: int
    parts: Tuple[Part, ...]

    def total(self) -> int:
        return self.a0 + sum(a for a, _ in self.parts)


@dataclass
class DynWitness:
    """Decomposition that violates the (weakly) dynamic inequality"""
    target: MultiIndex
    splits: Tuple[ComponentSplit, ...]
    c: MultiIndex
    component: int
    mode: str
    lhs_valuation: Valuation
    rhs_valuation: Valuation

    def recheck(self, spec: TauSpec, ctx: PrimeContext) -> bool:
        """Recompute the inequality from the stored fields; True if it still fails"""
        c = _assemble(self.target, self.splits)
        if c != self.c:
            return False
        lhs, rhs = _sides(spec, self.target, self.splits, c, self.component, self.mode, ctx)
        return lhs < rhs

    def to_dict(self) -> Dict:
        return {
            "target": list(self.target),
            "splits": [{"a0": s.a0, "parts": [{"a": a, "b": list(b)} for a, b in s.parts]}
                       for s in self.splits],
            "c": list(self.c),
            "component": self.component,
            "mode": self.mode,
            "lhs_valuation": self.lhs_valuation,
            "rhs_valuation": self.rhs_valuation,
        }

    def describe(self) -> str:
        return (f"a={list(self.target)} c={list(self.c)} component {self.component}: "
                f"v(lhs)={self.lhs_valuation} < v(rhs)={self.rhs_valuation}")


def _assemble(target: MultiIndex, splits: Sequence[ComponentSplit]) -> MultiIndex:
    r = len(target)
    c = [0] * r
    for k, split in enumerate(splits, start=1):
        if split.total() != target[k - 1]:
            raise PreconditionError(f"split of component {k} does not add up to {target[k - 1]}")
        for i, e in enumerate(unit_index(r, k)):
            c[i] += split.a0 * e
        for a, b in split.parts:
            for i, e in enumerate(b):
                c[i] += a * e
    return tuple(c)


def multinomial_valuation(split: ComponentSplit, ctx: PrimeContext) -> int:
    total = legendre_valuation(split.total(), ctx.p)
    total -= legendre_valuation(split.a0, ctx.p)
    total -= sum(legendre_valuation(a, ctx.p) for a, _ in split.parts)
    return total


def _sides(spec: TauSpec, target: MultiIndex, splits: Sequence[ComponentSplit], c: MultiIndex,
           n: int, mode: str, ctx: PrimeContext) -> Tuple[Valuation, Valuation]:
    # valuation form of |tau_n(c)| (|multinomials|) <= |tau_n(a)| prod |tau_k(b_i)|^a_i
    lhs = tau_valuation(spec, c, n, ctx)
    if mode == "weak":
        lhs += sum(multinomial_valuation(s, ctx) for s in splits)
    rhs = tau_valuation(spec, target, n, ctx)
    for k, split in enumerate(splits, start=1):
        rhs += sum(a * tau_valuation(spec, b, k, ctx) for a, b in split.parts)
    return lhs, rhs


@lru_cache(maxsize=None)
def _partitions(n: int) -> Tuple[Tuple[int, ...], ...]:
    """Partitions of n into positive parts, parts descending, largest first part first"""
    if n == 0:
        return ((),)
    # sympy reuses the yielded dict, so each one is flattened right away
    found = [tuple(part for part, count in sorted(p.items(), reverse=True) for _ in range(count))
             for p in partitions(n)]
    return tuple(sorted(found, reverse=True))


class DynamicChecker:
    """Exhaustive check of the dynamic inequality up to a total-degree bound"""

    def __init__(self, spec: TauSpec, ctx: PrimeContext, bound: int = DEFAULT_ENUMERATION_BOUND):
        self.logger = logging.getLogger(__name__)
        spec.validate(ctx)
        if bound < spec.t:
            raise PreconditionError(f"bound {bound} is below t = {spec.t}")
        self.spec = spec
        self.ctx = ctx
        self.bound = bound
        self.vectors = indices_up_to(spec.var_count, spec.t, bound)
        self.checked = 0

    def _assign(self, parts: Tuple[int, ...], budget: int, used: Tuple[int, ...] = ()
                ) -> Iterator[Tuple[int, ...]]:
        """Distinct b-vectors (by position in self.vectors) for the given parts"""
        if len(used) == len(parts):
            yield used
            return
        a = parts[len(used)]
        start = 0
        if used and parts[len(used) - 1] == a:
            start = used[-1] + 1
        for pos in range(start, len(self.vectors)):
            cost = a * degree(self.vectors[pos])
            if cost > budget:
                break
            if pos in used:
                continue
            yield from self._assign(parts, budget - cost, used + (pos,))

    def _component_splits(self, ak: int, budget: int) -> Iterator[Tuple[ComponentSplit, int]]:
        for a0 in range(0, min(ak, budget) + 1):
            for parts in _partitions(ak - a0):
                for chosen in self._assign(parts, budget - a0):
                    parts_b = tuple((a, self.vectors[pos]) for a, pos in zip(parts, chosen))
                    cost = a0 + sum(a * degree(b) for a, b in parts_b)
                    yield ComponentSplit(a0, parts_b), cost

    def _decompositions(self, target: MultiIndex, k: int = 0, budget: Optional[int] = None
                        ) -> Iterator[Tuple[ComponentSplit, ...]]:
        budget = self.bound if budget is None else budget
        if k == len(target):
            yield ()
            return
        for split, cost in self._component_splits(target[k], budget):
            for rest in self._decompositions(target, k + 1, budget - cost):
                yield (split,) + rest

    def run(self, mode: str = "strong") -> Optional[DynWitness]:
        if mode not in ("weak", "strong"):
            raise PreconditionError(f"mode must be weak or strong, got {mode!r}")
        self.checked = 0
        for target in self.vectors:
            for splits in self._decompositions(target):
                c = _assemble(target, splits)
                for n in range(1, self.spec.var_count + 1):
                    self.checked += 1
                    lhs, rhs = _sides(self.spec, target, splits, c, n, mode, self.ctx)
                    if lhs < rhs:
                        witness = DynWitness(target, splits, c, n, mode, lhs, rhs)
                        self.logger.info(f"Dynamic inequality fails: {witness.describe()}")
                        return witness
        self.logger.info(f"{self.spec.variant} passes {mode} check "
                         f"({self.checked} inequalities, bound {self.bound})")
        return None


def check_dynamic(spec: TauSpec, ctx: PrimeContext, bound: int = DEFAULT_ENUMERATION_BOUND,
                  mode: str = "strong") -> Optional[DynWitness]:
    """None when every decomposition with |c| <= bound satisfies the inequality"""
    return DynamicChecker(spec, ctx, bound).run(mode)


@dataclass(frozen=True)
class Certificate:
    """margin = v_p(tau_k(index) * coefficient); nonnegative means the bound holds"""
    component: int
    index: MultiIndex
    margin: Valuation

    @property
    def holds(self) -> bool:
        return self.margin >= 0

    def to_dict(self) -> Dict:
        margin = self.margin if abs(self.margin) != math.inf else str(self.margin)
        return {"component": self.component, "index": list(self.index), "margin": margin}


@dataclass
class MembershipResult:
    """Per-coefficient margins of a membership test in G(tau)"""
    certificates: List[Certificate] = field(default_factory=list)
    units_ok: bool = True
    offending: Optional[Certificate] = None

    @property
    def passed(self) -> bool:
        return self.offending is None and self.units_ok

    @property
    def worst(self) -> Optional[Certificate]:
        return min(self.certificates, key=lambda c: c.margin, default=None)

    def to_dict(self) -> Dict:
        return {
            "passed": self.passed,
            "unit_eigenvalues": self.units_ok,
            "offending": self.offending.to_dict() if self.offending else None,
            "certificates": [c.to_dict() for c in self.certificates],
        }


def tail_margins(F: FormalMap, spec: TauSpec, ctx: PrimeContext,
                 low: int = 2) -> List[Certificate]:
    """Margins for every stored tail coefficient of total degree >= low"""
    out = []
    for k, index, value in F.nonlinear_terms():
        if degree(index) < low:
            continue
        if degree(index) < spec.t:
            out.append(Certificate(k, index, -math.inf))
            continue
        out.append(Certificate(k, index, tau_valuation(spec, index, k, ctx) + valuation(value, ctx)))
    return out


def membership(F: FormalMap, spec: TauSpec, ctx: PrimeContext,
               require_units: bool = True) -> MembershipResult:
    if F.var_count != spec.var_count:
        raise PreconditionError(f"map has {F.var_count} variables, tau has {spec.var_count}")
    certificates = tail_margins(F, spec, ctx)
    result = MembershipResult(certificates)
    if require_units:
        result.units_ok = all(valuation(e, ctx) == 0 for e in F.eigenvalues)
    failing = [c for c in certificates if not c.holds]
    if failing:
        result.offending = min(failing, key=lambda c: (c.margin, degree(c.index), c.component))
        logger.debug(f"Membership fails at component {result.offending.component}, "
                     f"index {result.offending.index}, margin {result.offending.margin}")
    return result
