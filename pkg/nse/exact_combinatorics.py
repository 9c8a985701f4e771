"""
Exact integer triangles (Catalan, Catalan trapezoid, Borel) and the closed
form, recursive and composition-sum laws of maximum ranked quotients between
two independent unit-exponential samples.

Triangle entries are Python integers throughout. Probability evaluators take
either a float or a `fractions.Fraction`; with a Fraction the whole evaluation
is exact.
"""
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import accumulate
from typing import Iterator, Sequence

import numpy as np
from loguru import logger

from nse.errors import InvariantViolation, ParameterDomainError, RangeError

Number = float | Fraction

FINITE_LEFT_MAX_N = 60
FINITE_LEFT_MAX_M = 8
EXACT_FULL_MAX_N = 9
BOUNDS_SLACK = 1e-9


class RecursionBoundsWarning(RuntimeWarning):
    """A recursion value fell outside [0, 1] by more than the tolerated slack."""


def catalan(n: int, k: int) -> int:
    if not 0 <= k <= n:
        raise ParameterDomainError(f"catalan needs 0 <= k <= n, got n={n}, k={k}")
    num = math.factorial(n + k) * (n - k + 1)
    den = math.factorial(k) * math.factorial(n + 1)
    value, rem = divmod(num, den)
    if rem:
        raise InvariantViolation(f"C({n},{k}) is not an integer")
    return value


def catalan_trapezoid(m: int, n: int, x: int) -> int:
    if m < 1 or n < 0 or x < 0:
        raise ParameterDomainError(f"catalan_trapezoid needs m >= 1, n >= 0, x >= 0, got ({m}, {n}, {x})")
    if x < m:
        return math.comb(n + x, x)
    if x <= n + m - 1:
        return math.comb(n + x, x) - math.comb(n + x, x - m)
    return 0


def borel(m: int, j: int) -> int:
    if not 0 <= j <= m:
        raise ParameterDomainError(f"borel needs 0 <= j <= m, got m={m}, j={j}")
    value, rem = divmod(math.comb(2 * m + 2, m - j) * math.comb(m + j, m), m + 1)
    if rem:
        raise InvariantViolation(f"B({m},{j}) division by {m + 1} left remainder {rem}")
    return value


@dataclass(frozen=True)
class RationalProb:
    """An exact probability held as a reduced fraction."""
    numerator: int
    denominator: int

    def __post_init__(self):
        if self.denominator <= 0:
            raise ParameterDomainError(f"denominator must be positive, got {self.denominator}")
        frac = Fraction(self.numerator, self.denominator)
        object.__setattr__(self, "numerator", frac.numerator)
        object.__setattr__(self, "denominator", frac.denominator)

    @classmethod
    def from_fraction(cls, value: Fraction) -> "RationalProb":
        return cls(value.numerator, value.denominator)

    def as_fraction(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def __float__(self) -> float:
        return self.numerator / self.denominator

    @property
    def is_probability(self) -> bool:
        return 0 <= self.numerator <= self.denominator


@dataclass(frozen=True)
class TriangleCache:
    """Rows 0..upto of the Catalan and Borel triangles, built once and shared read-only."""
    upto: int
    catalan_rows: tuple[tuple[int, ...], ...]
    borel_rows: tuple[tuple[int, ...], ...]

    @classmethod
    def build(cls, upto: int) -> "TriangleCache":
        return cls(
            upto=upto,
            catalan_rows=tuple(tuple(catalan(n, k) for k in range(n + 1)) for n in range(upto + 1)),
            borel_rows=tuple(tuple(borel(m, j) for j in range(m + 1)) for m in range(upto + 1)),
        )

    def catalan_row(self, n: int) -> tuple[int, ...]:
        return self.catalan_rows[n] if n <= self.upto else tuple(catalan(n, k) for k in range(n + 1))

    def borel_row(self, m: int) -> tuple[int, ...]:
        return self.borel_rows[m] if m <= self.upto else tuple(borel(m, j) for j in range(m + 1))

    @staticmethod
    def trapezoid_row(m: int, n: int) -> tuple[int, ...]:
        return tuple(catalan_trapezoid(m, n, x) for x in range(n + m))


@lru_cache(maxsize=None)
def triangles(upto: int = 16) -> TriangleCache:
    return TriangleCache.build(upto)


def _k_of(t: Number) -> Number:
    if not t > 0:
        raise ParameterDomainError(f"t must be > 0, got {t}")
    return 1 + 1 / t if isinstance(t, Fraction) else 1.0 + 1.0 / float(t)


def limit_left_cdf(ell: int, t):
    """
    Limit law R_ell(t) of the left-end MRQ over the first ell ranks:
    sum_j (-1)^j B(ell-1, j) k^(ell-j-1) / k^(2 ell - 1) with k = 1 + 1/t.

    Accepts a float, a Fraction or a numpy array of t values.
    """
    if ell < 1:
        raise ParameterDomainError(f"ell must be >= 1, got {ell}")
    coeffs = triangles(max(16, ell)).borel_row(ell - 1)
    if isinstance(t, Fraction):
        k = _k_of(t)
        return sum((-1) ** j * b * k ** (ell - j - 1) for j, b in enumerate(coeffs)) / k ** (2 * ell - 1)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ParameterDomainError("t must be > 0")
    k = 1.0 + 1.0 / t_arr
    num = sum((-1) ** j * float(b) * k ** (ell - j - 1) for j, b in enumerate(coeffs))
    out = num / k ** (2 * ell - 1)
    return float(out) if t_arr.ndim == 0 else out


def finite_left_cdf(n: int, m: int, t: Number) -> Number:
    """
    P(max_{i<=m} X_(i)/Y_(i) <= t) for two independent unit-exponential
    samples of size n, by the alternating recursion with base case 1/k.
    """
    if not (1 <= m <= n <= FINITE_LEFT_MAX_N and m <= FINITE_LEFT_MAX_M):
        raise RangeError(f"finite_left_cdf is validated for 1 <= m <= n <= {FINITE_LEFT_MAX_N}, "
                         f"m <= {FINITE_LEFT_MAX_M}; got n={n}, m={m}")
    k = _k_of(t)
    exact = isinstance(k, Fraction)
    one = Fraction(1) if exact else 1.0
    memo: dict[tuple[int, int], Number] = {}

    def ratio_product(nn: int, terms: int) -> Number:
        prod = one
        for i in range(terms):
            prod *= (nn - i) / (nn * k - i) if not exact else Fraction(nn - i) / (nn * k - i)
        return prod

    def rec(nn: int, mm: int) -> Number:
        if (nn, mm) in memo:
            return memo[(nn, mm)]
        if mm == 1:
            value = one / k
        else:
            value = 0 * one
            for j in range(1, mm):
                value += (-1) ** (j + 1) * math.comb(nn, j) * rec(nn - j, mm - j) * ratio_product(nn, j)
            value += (-1) ** (mm + 1) * math.comb(nn - 1, mm - 1) * ratio_product(nn, mm)
        memo[(nn, mm)] = value
        return value

    value = rec(n, m)
    if value < -BOUNDS_SLACK or value > 1 + BOUNDS_SLACK:
        logger.warning(f"finite_left_cdf(n={n}, m={m}, t={t}) = {float(value):.6g} lies outside [0, 1]")
        warnings.warn(f"finite_left_cdf(n={n}, m={m}) out of bounds: {float(value)}", RecursionBoundsWarning)
    return value


def bracket_integral(c: Sequence[Number]) -> Number:
    """[c_1, ..., c_n] = 1 / (c_n (c_n + c_{n-1}) ... (c_n + ... + c_1))."""
    if len(c) == 0:
        raise ParameterDomainError("bracket_integral needs at least one entry")
    if any(not ci > 0 for ci in c):
        raise ParameterDomainError(f"bracket_integral needs positive entries, got {list(c)}")
    prod = 1
    for suffix in accumulate(reversed(c)):
        prod *= suffix
    return 1 / prod if not isinstance(prod, Fraction) else Fraction(1) / prod


def compositions(n: int) -> Iterator[tuple[int, ...]]:
    """Compositions of n in lexicographic order, generated lazily."""
    if n == 0:
        yield ()
        return
    for first in range(1, n + 1):
        for rest in compositions(n - first):
            yield (first,) + rest


def exact_full_mrq_cdf(n: int, t: Number) -> Number:
    """
    P(max_i X_(i)/Y_(i) <= t) over all n ranks, as the signed sum over
    compositions j_1 + ... + j_k = n of bracket integrals.
    """
    if not 1 <= n <= EXACT_FULL_MAX_N:
        raise RangeError(f"exact_full_mrq_cdf is limited to 1 <= n <= {EXACT_FULL_MAX_N}, got n={n}")
    if not t > 0:
        raise ParameterDomainError(f"t must be > 0, got {t}")
    exact = isinstance(t, Fraction)
    one = Fraction(1) if exact else 1.0
    total = 0 * one
    for parts in compositions(n):
        weight = one * (-1) ** len(parts) / math.prod(math.factorial(j) for j in parts)
        entries = [one] * n
        position = 0
        for j in parts:
            entries[position] = t * j + 1
            position += j
        first = bracket_integral(entries)
        entries[0] = one
        total += weight * (first - bracket_integral(entries))
    return math.factorial(n) ** 2 * total


def exact_full_mrq_cdf_rational(n: int, t: Fraction) -> RationalProb:
    return RationalProb.from_fraction(exact_full_mrq_cdf(n, Fraction(t)))
