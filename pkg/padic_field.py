#!/usr/bin/env python3
"""
Exact p-adic arithmetic on the rationals

Scalars are exact rationals; norms are (p, exponent) pairs so that no
floating point value is ever compared. The module also carries the
number-theoretic decisions used by the uniqueness procedures: the j-th
power test in Q_p and the root-of-unity constraint solver.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering
from typing import Dict, Iterable, Optional, Tuple, Union

from sympy import isprime, multiplicity
from sympy.ntheory import is_nthpow_residue
from sympy.ntheory.modular import solve_congruence

from normal_form_errors import DomainError, PreconditionError, RootOfUnityMismatch

logger = logging.getLogger(__name__)

Scalar = Fraction
INFINITY = math.inf
Valuation = Union[int, float]


@total_ordering
@dataclass(frozen=True)
class NormValue:
    """Exact norm |x| = base**exponent; exponent None encodes |0| = 0"""
    base: int
    exponent: Optional[int]

    @classmethod
    def from_valuation(cls, base: int, value: Valuation) -> "NormValue":
        if value == INFINITY:
            return cls(base, None)
        return cls(base, -int(value))

    @property
    def is_zero(self) -> bool:
        return self.exponent is None

    def _key(self):
        return -INFINITY if self.exponent is None else self.exponent

    def __lt__(self, other: "NormValue") -> bool:
        self._check_base(other)
        return self._key() < other._key()

    def __mul__(self, other: "NormValue") -> "NormValue":
        self._check_base(other)
        if self.is_zero or other.is_zero:
            return NormValue(self.base, None)
        return NormValue(self.base, self.exponent + other.exponent)

    def __pow__(self, k: int) -> "NormValue":
        if self.is_zero:
            return self
        return NormValue(self.base, self.exponent * k)

    def reciprocal(self) -> "NormValue":
        if self.is_zero:
            raise DomainError("the zero norm has no reciprocal")
        return NormValue(self.base, -self.exponent)

    def _check_base(self, other: "NormValue"):
        if self.base != other.base:
            raise PreconditionError(f"norms for different primes: {self.base} and {other.base}")

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        return f"{self.base}^{self.exponent}"


@dataclass(frozen=True)
class PrimeContext:
    """Prime p together with the factorial constant alpha = 1/p"""
    p: int

    def __post_init__(self):
        if not isinstance(self.p, int) or self.p < 2 or not isprime(self.p):
            raise PreconditionError(f"p must be a prime, got {self.p!r}")

    @property
    def alpha(self) -> NormValue:
        # |n!| >= alpha**n for every n
        return NormValue(self.p, -1)

    @property
    def root_of_unity_order(self) -> int:
        """Order of the (cyclic) group of roots of unity in Q_p"""
        return 2 if self.p == 2 else self.p - 1

    def valuation(self, x) -> Valuation:
        return valuation(x, self)

    def norm(self, x) -> NormValue:
        return NormValue.from_valuation(self.p, valuation(x, self))


def parse_scalar(value) -> Scalar:
    """Read a scalar from an int or a canonical "num/den" string"""
    if isinstance(value, bool) or isinstance(value, float):
        raise PreconditionError(f"scalars must be exact, got {value!r}")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as e:
            raise PreconditionError(f"invalid scalar {value!r}: {e}")
    raise PreconditionError(f"cannot read a scalar from {value!r}")


def format_scalar(x: Scalar) -> str:
    return str(Fraction(x))


def valuation(x, ctx: PrimeContext) -> Valuation:
    """v_p(num) - v_p(den); +infinity for zero"""
    x = Fraction(x)
    if x == 0:
        return INFINITY
    return int(multiplicity(ctx.p, abs(x.numerator))) - int(multiplicity(ctx.p, x.denominator))


def norm(x, ctx: PrimeContext) -> NormValue:
    return ctx.norm(x)


def is_integral(x, ctx: PrimeContext) -> bool:
    """True when x lies in the ring of integers (|x| <= 1)"""
    return valuation(x, ctx) >= 0


def unit_part(x, ctx: PrimeContext) -> Scalar:
    """x * p**(-v_p(x)), a p-adic unit"""
    v = valuation(x, ctx)
    if v == INFINITY:
        raise DomainError("zero has no unit part")
    return Fraction(x) / Fraction(ctx.p) ** v


def legendre_valuation(n: int, p: int) -> int:
    """Sum of floor(n / p**i), the exponent of p in n!"""
    total, power = 0, p
    while power <= n:
        total += n // power
        power *= p
    return total


def factorial_valuation(n: int, ctx: PrimeContext) -> int:
    """v_p(n!) by repeated division of the integer n!"""
    if n < 0:
        raise PreconditionError("factorial of a negative integer")
    return int(multiplicity(ctx.p, math.factorial(n)))


def factorial_bound_check(n: int, ctx: PrimeContext) -> bool:
    """Decide |n!|_p >= (1/p)**n exactly"""
    if n < 0:
        raise PreconditionError("n must be nonnegative")
    return legendre_valuation(n, ctx.p) <= n


def is_jth_power(x, j: int, ctx: PrimeContext) -> bool:
    """Decide whether x is a j-th power in Q_p

    The valuation must be divisible by j and the unit part must be a j-th
    power modulo p**(1 + 2 v_p(j)); Hensel lifting does the rest.
    """
    x = Fraction(x)
    if x == 0:
        raise DomainError("is_jth_power is undefined at 0")
    if j < 1:
        raise PreconditionError(f"j must be >= 1, got {j}")
    if j == 1:
        return True
    v = valuation(x, ctx)
    if v % j:
        return False
    u = unit_part(x, ctx)
    modulus = ctx.p ** (1 + 2 * int(multiplicity(ctx.p, j)))
    residue = u.numerator * pow(u.denominator, -1, modulus) % modulus
    return bool(is_nthpow_residue(residue, j, modulus))


@dataclass(frozen=True)
class ZetaClass:
    """Discrete-log residue class t mod `modulus` describing zeta = g**t

    g is a generator of the roots of unity in Q_p, a cyclic group of
    order `group_order`.
    """
    residue: int
    modulus: int
    group_order: int

    def representatives(self) -> Tuple[int, ...]:
        """Every discrete log t in [0, group_order) of the class"""
        return tuple(range(self.residue % self.modulus, self.group_order, self.modulus))

    def to_dict(self) -> Dict:
        return {"residue": self.residue, "modulus": self.modulus, "group_order": self.group_order,
                "discrete_logs": list(self.representatives())}


def _linear_congruence(a: int, b: int, modulus: int) -> Optional[Tuple[int, int]]:
    """Solutions of a*t = b (mod modulus) as a residue class"""
    g = math.gcd(a, modulus)
    if b % g:
        return None
    reduced = modulus // g
    if reduced == 1:
        return 0, 1
    return (b // g) * pow(a // g, -1, reduced) % reduced, reduced


def solve_zeta_constraints(constraints: Iterable[Tuple[int, object]],
                           order_divisor: int,
                           ctx: PrimeContext) -> Optional[ZetaClass]:
    """Find zeta in Q_p with zeta**order_divisor = 1 and zeta**k = eps_k

    Each constraint is (k, eps_k) with eps_k a rational that must be +1 or
    -1; any other ratio raises RootOfUnityMismatch. Returns None when no
    root of unity satisfies the system.
    """
    if order_divisor < 1:
        raise PreconditionError("order divisor must be >= 1")
    group_order = ctx.root_of_unity_order
    half = group_order // 2
    pairs = [_linear_congruence(order_divisor % group_order, 0, group_order)]
    for k, eps in constraints:
        eps = Fraction(eps)
        if eps not in (1, -1):
            raise RootOfUnityMismatch(k, eps)
        target = half if eps == -1 else 0
        pairs.append(_linear_congruence(k % group_order, target, group_order))
        if pairs[-1] is None:
            logger.debug(f"No root of unity with zeta^{k} = {eps} in Q_{ctx.p}")
            return None
    solution = solve_congruence(*pairs, check=False)
    if solution is None:
        return None
    residue, modulus = solution
    return ZetaClass(int(residue) % int(modulus), int(modulus), group_order)
