"""Combinatorial kernels and the hypergeometric identity suite.

Every identity comes as a pair: a closed form and a brute-force evaluator
that sums the defining expression term by term.  Both work in exact
rational arithmetic (:class:`fractions.Fraction`), so the pair can be
compared with ``==``.  Floating-point versions exist only where the solver
and the error sweep need speed: the harmonic table, the log multinomial
and the log of the Lambda normaliser.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

__all__ = [
    "falling",
    "rising",
    "factorial_power",
    "binom",
    "harmonic",
    "HarmonicTable",
    "lambda_coeff",
    "log_lambda",
    "log_lambda_rows",
    "log_multinomial",
    "log_multinomial_rows",
    "multichoose_ratio",
    "fact_ratio_sum",
    "fact_ratio_sum_brute",
    "fact_comb_harmonic",
    "fact_comb_harmonic_brute",
    "fact_ratio2_sum",
    "fact_ratio2_sum_brute",
    "hyper_falling_moment",
    "hyper_falling_moment_brute",
    "restricted_moment_tweak",
    "restricted_moment_tweak_brute",
    "restricted_moment_mixed",
    "restricted_moment_mixed_brute",
    "restricted_moment_mixed_as_printed",
    "bounded_vectors",
]


def falling(x, k: int):
    """x (x-1) ... (x-k+1); works for ints, Fractions, floats and arrays."""
    out = 1
    for i in range(k):
        out = out * (x - i)
    return out


def rising(x, k: int):
    """x (x+1) ... (x+k-1)."""
    out = 1
    for i in range(k):
        out = out * (x + i)
    return out


def factorial_power(x: int, k: int, kind: str = "falling") -> Fraction:
    if k < 0:
        raise DomainError(f"factorial power order must be non-negative, got {k}")
    if kind == "falling":
        return Fraction(falling(x, k))
    if kind == "rising":
        return Fraction(rising(x, k))
    raise DomainError(f"kind must be 'falling' or 'rising', got {kind!r}")


def binom(a: int, b: int) -> int:
    """Binomial coefficient that is zero outside ``0 <= b <= a``."""
    if b < 0 or a < 0 or b > a:
        return 0
    return math.comb(a, b)


def harmonic(k: int) -> Fraction:
    """The k-th harmonic number as an exact rational; ``harmonic(0) == 0``."""
    if k < 0:
        raise DomainError(f"harmonic index must be non-negative, got {k}")
    return sum((Fraction(1, m) for m in range(1, k + 1)), Fraction(0))


class HarmonicTable:
    """Double-precision harmonic numbers ``H_0 .. H_size``.

    Built once with Neumaier-compensated summation and read-only afterwards.
    The table grows on demand through :meth:`ensure`.
    """

    def __init__(self, size: int = 64):
        self._values = np.zeros(1)
        self.ensure(size)

    def ensure(self, size: int) -> "HarmonicTable":
        if size + 1 <= len(self._values):
            return self
        values = np.empty(size + 1)
        total, comp = 0.0, 0.0
        values[0] = 0.0
        for k in range(1, size + 1):
            term = 1.0 / k
            t = total + term
            if abs(total) >= abs(term):
                comp += (total - t) + term
            else:
                comp += (term - t) + total
            total = t
            values[k] = total + comp
        values.flags.writeable = False
        self._values = values
        return self

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __len__(self):
        return len(self._values)

    def __getitem__(self, idx):
        return self._values[idx]

    def diff(self, a, b):
        """``H_a - H_b`` for integer scalars or arrays."""
        return self._values[a] - self._values[b]


def _support_counts(n: Sequence[int]) -> list[int]:
    return [c for c in n if c > 0]


def lambda_coeff(n: Sequence[int]) -> Fraction:
    """prod over observed alleles of (n_i - 1)!, divided by (n - 1)!."""
    total = sum(n)
    if total < 1:
        raise DomainError("Lambda is undefined for the empty configuration")
    num = 1
    for c in _support_counts(n):
        num *= math.factorial(c - 1)
    return Fraction(num, math.factorial(total - 1))


def log_lambda(n: Sequence[int]) -> float:
    total = sum(n)
    if total < 1:
        raise DomainError("Lambda is undefined for the empty configuration")
    return sum(math.lgamma(c) for c in _support_counts(n)) - math.lgamma(total)


def log_lambda_rows(configs: np.ndarray) -> np.ndarray:
    """Vectorised :func:`log_lambda` over the rows of a count matrix."""
    configs = np.asarray(configs)
    totals = configs.sum(axis=1)
    # gammaln(c) for c == 0 is inf; zero counts are not observed so mask them.
    per = np.where(configs > 0, gammaln(np.maximum(configs, 1)), 0.0)
    return per.sum(axis=1) - gammaln(totals)


def log_multinomial(n: Sequence[int]) -> float:
    """Natural log of n! / prod n_i!."""
    total = sum(n)
    if total < 1:
        raise DomainError("multinomial of the empty configuration")
    return math.lgamma(total + 1) - sum(math.lgamma(c + 1) for c in n)


def log_multinomial_rows(configs: np.ndarray) -> np.ndarray:
    configs = np.asarray(configs)
    return gammaln(configs.sum(axis=1) + 1) - gammaln(configs + 1).sum(axis=1)


def multichoose_ratio(n: Sequence[int], m: Sequence[int]) -> Fraction:
    """prod_i C(n_i, m_i) / C(n, m): the hypergeometric probability of m."""
    num = 1
    for ni, mi in zip(n, m):
        num *= binom(ni, mi)
    return Fraction(num, binom(sum(n), sum(m)))


def bounded_vectors(upper: Sequence[int], total: int,
                    lower: Sequence[int] | None = None) -> Iterator[tuple[int, ...]]:
    """All integer vectors v with lower <= v <= upper and sum(v) == total."""
    if lower is None:
        lower = [0] * len(upper)
    ranges = [range(lo, hi + 1) for lo, hi in zip(lower, upper)]
    for v in itertools.product(*ranges):
        if sum(v) == total:
            yield v


def _positive_lower(n: Sequence[int]) -> list[int]:
    # "all-positive" means positive on the support of n; unobserved types stay 0
    return [1 if c > 0 else 0 for c in n]


# -- binomial-ratio sums ----------------------------------------------------

def fact_ratio_sum(x: int, y: int, a: int, b: int) -> Fraction:
    """sum_{m=x}^{y} C(b,m)/C(a,m) via its closed form."""
    if min(x, y, a, b) < 1 or b > a or x > y:
        raise DomainError(f"need positive x <= y and b <= a, got {(x, y, a, b)}")
    return Fraction(binom(a + 1 - x, a + 1 - b) - binom(a - y, a + 1 - b), binom(a, b))


def fact_ratio_sum_brute(x: int, y: int, a: int, b: int) -> Fraction:
    if min(x, y, a, b) < 1 or b > a or x > y:
        raise DomainError(f"need positive x <= y and b <= a, got {(x, y, a, b)}")
    total = Fraction(0)
    for m in range(x, y + 1):
        num = binom(b, m)
        if num:
            total += Fraction(num, binom(a, m))
    return total


def fact_comb_harmonic(a: int, b: int) -> Fraction:
    """sum_{m=1}^{a} C(a-m, b)/m via C(a,b)(H_a - H_b)."""
    if a < 1 or b < 1:
        raise DomainError(f"need positive a, b, got {(a, b)}")
    return binom(a, b) * (harmonic(a) - harmonic(b))


def fact_comb_harmonic_brute(a: int, b: int) -> Fraction:
    if a < 1 or b < 1:
        raise DomainError(f"need positive a, b, got {(a, b)}")
    return sum((Fraction(binom(a - m, b), m) for m in range(1, a + 1)), Fraction(0))


def fact_ratio2_sum(a: int, b: int) -> Fraction:
    """sum_{m=1}^{b} C(b,m)/C(a,m)/(m+1) via its closed form."""
    if a < 1 or b < 1 or b > a:
        raise DomainError(f"need positive b <= a, got {(a, b)}")
    return Fraction(a + 1, b + 1) * (harmonic(a + 1) - harmonic(a - b)) - 1


def fact_ratio2_sum_brute(a: int, b: int) -> Fraction:
    if a < 1 or b < 1 or b > a:
        raise DomainError(f"need positive b <= a, got {(a, b)}")
    return sum((Fraction(binom(b, m), binom(a, m) * (m + 1)) for m in range(1, b + 1)),
               Fraction(0))


# -- hypergeometric moments -------------------------------------------------

def hyper_falling_moment(n: Sequence[int], m: int, t: Sequence[int]) -> Fraction:
    """E[prod_i fall(m_i, t_i)] for a hypergeometric draw of size m from n."""
    if len(n) != len(t):
        raise DomainError(f"dimension mismatch: len(n)={len(n)}, len(t)={len(t)}")
    total, tt = sum(n), sum(t)
    if not 0 <= m <= total or tt > total or min(t, default=0) < 0:
        raise DomainError(f"need 0 <= m <= |n| and |t| <= |n|, got m={m}, t={t}")
    fm = falling(m, tt)
    if fm == 0:
        return Fraction(0)
    num = 1
    for ni, ti in zip(n, t):
        num *= falling(ni, ti)
    return Fraction(num * fm, falling(total, tt))


def hyper_falling_moment_brute(n: Sequence[int], m: int, t: Sequence[int]) -> Fraction:
    if len(n) != len(t):
        raise DomainError(f"dimension mismatch: len(n)={len(n)}, len(t)={len(t)}")
    if not 0 <= m <= sum(n):
        raise DomainError(f"need 0 <= m <= |n|, got m={m}")
    total = Fraction(0)
    for v in bounded_vectors(n, m):
        w = 1
        for vi, ti in zip(v, t):
            w *= falling(vi, ti)
        if w:
            total += multichoose_ratio(n, v) * w
    return total


def _check_restricted(n, m, *idx):
    if not 1 <= m <= sum(n):
        raise DomainError(f"need 1 <= m <= |n|, got m={m}, |n|={sum(n)}")
    for j in idx:
        if not 0 <= j < len(n):
            raise DomainError(f"type index {j} out of range for L={len(n)}")


def _subsets_avoiding(n: Sequence[int], avoid: Sequence[int]) -> Iterator[tuple[int, ...]]:
    # only observed types take part: a type with n_t = 0 would pair every
    # subset with an identical one of opposite sign and cancel the whole sum
    pool = [t for t in range(len(n)) if t not in avoid and n[t] > 0]
    for r in range(len(pool) + 1):
        yield from itertools.combinations(pool, r)


def restricted_moment_tweak(n: Sequence[int], m: int, j: int) -> Fraction:
    """sum over support-positive m-vectors of [C(n,mvec)/C(n,m)] m_j (m_j + 1).

    Inclusion-exclusion over subsets T of types not containing j.  Type
    indices are 0-based.  A term whose C(n - n_T, m) factor vanishes is
    zero, which also disposes of the 0/0 in fall(n - n_T, 2).
    """
    _check_restricted(n, m, j)
    total = sum(n)
    out = Fraction(0)
    for T in _subsets_avoiding(n, [j]):
        rest = total - sum(n[t] for t in T)
        c = binom(rest, m)
        if c == 0:
            continue
        # c > 0 implies rest >= m >= 1, and fall(m, 2) > 0 implies rest >= 2
        term = Fraction(2 * n[j] * m, rest)
        fm = falling(m, 2)
        if fm:
            term += Fraction(falling(n[j], 2) * fm, falling(rest, 2))
        out += (-1) ** len(T) * term * Fraction(c, binom(total, m))
    return out


def restricted_moment_tweak_brute(n: Sequence[int], m: int, j: int) -> Fraction:
    _check_restricted(n, m, j)
    out = Fraction(0)
    for v in bounded_vectors(n, m, _positive_lower(n)):
        out += multichoose_ratio(n, v) * v[j] * (v[j] + 1)
    return out


def _mixed_rhs(n, m, j, k, avoid):
    total = sum(n)
    out = Fraction(0)
    for T in _subsets_avoiding(n, avoid):
        rest = total - sum(n[t] for t in T)
        c = binom(rest, m)
        if c == 0:
            continue
        fm = falling(m, 2)
        if fm == 0:
            continue
        term = Fraction(n[j] * n[k] * fm, falling(rest, 2))
        out += (-1) ** len(T) * term * Fraction(c, binom(total, m))
    return out


def restricted_moment_mixed(n: Sequence[int], m: int, j: int, k: int) -> Fraction:
    """sum over support-positive m-vectors of [C(n,mvec)/C(n,m)] m_j m_k.

    Subsets T avoid both j and k and every term carries n_j n_k; this is the
    form that agrees with the full-enumeration sum.
    """
    if j == k:
        raise DomainError("restricted_moment_mixed needs distinct j and k")
    _check_restricted(n, m, j, k)
    return _mixed_rhs(n, m, j, k, [j, k])


def restricted_moment_mixed_as_printed(n: Sequence[int], m: int, j: int, k: int) -> Fraction:
    """The variant whose subsets only avoid j.  Kept to document that it is wrong."""
    if j == k:
        raise DomainError("restricted_moment_mixed needs distinct j and k")
    _check_restricted(n, m, j, k)
    return _mixed_rhs(n, m, j, k, [j])


def restricted_moment_mixed_brute(n: Sequence[int], m: int, j: int, k: int) -> Fraction:
    if j == k:
        raise DomainError("restricted_moment_mixed needs distinct j and k")
    _check_restricted(n, m, j, k)
    out = Fraction(0)
    for v in bounded_vectors(n, m, _positive_lower(n)):
        out += multichoose_ratio(n, v) * v[j] * v[k]
    return out
