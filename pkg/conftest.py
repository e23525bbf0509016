#!/usr/bin/env python3
"""
Shared fixtures for the test suite

Random inputs come from seeded generators so every run sees the same maps.
"""

import random
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Sequence

import pytest

from formal_series import FormalMap, Series, homogeneous_indices
from padic_field import PrimeContext

JOBS_DIR = Path(__file__).parent / "jobs"


@pytest.fixture
def ctx2():
    return PrimeContext(2)


@pytest.fixture
def ctx3():
    return PrimeContext(3)


@pytest.fixture
def ctx5():
    return PrimeContext(5)


@pytest.fixture
def rng():
    return random.Random(20240611)


@pytest.fixture
def jobs_dir():
    return JOBS_DIR


def random_tails(rng: random.Random, var_count: int, truncation: int, terms: int = 6,
                 low: int = 2, spread: int = 3) -> List[Dict]:
    """Sparse integral tails with a handful of nonzero terms per component"""
    pool = [a for d in range(low, truncation + 1) for a in homogeneous_indices(var_count, d)]
    tails = []
    for _ in range(var_count):
        chosen = rng.sample(pool, min(terms, len(pool)))
        tails.append({a: rng.choice([v for v in range(-spread, spread + 1) if v]) for a in chosen})
    return tails


def random_integral_map(rng: random.Random, eigenvalues: Sequence, truncation: int,
                        terms: int = 6) -> FormalMap:
    tails = random_tails(rng, len(eigenvalues), truncation, terms)
    return FormalMap(eigenvalues, [Series(len(eigenvalues), truncation, t) for t in tails], truncation)


def random_tangent_map(rng: random.Random, truncation: int, terms: int = 4) -> FormalMap:
    """Integral map with identity linear part (its inverse is integral too)"""
    return random_integral_map(rng, (1, 1), truncation, terms)


def random_tangent_series(rng: random.Random, truncation: int, low: int = 2,
                          terms: int = 4) -> Series:
    """x + (random integral terms from degree low on), leading coefficient nonzero"""
    coeffs = {(1,): Fraction(1), (low,): Fraction(rng.choice([-3, -2, -1, 1, 2, 3]))}
    for d in rng.sample(range(low + 1, truncation + 1), min(terms, truncation - low)):
        coeffs[(d,)] = Fraction(rng.randint(-3, 3))
    return Series(1, truncation, coeffs)

