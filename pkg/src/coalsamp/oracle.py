"""Reference evaluators for R(n) = Q(n) / Lambda(n).

Two independent recursions, each memoised over configurations whose
support lies inside the observed alleles of the query:

* ``dp``: the leading-order part of the coalescent recursion,

      n (n-1) R(n) = sum_{i: n_i > 1} n_i (n-1) R(n - e_i)
                   + sum_{i: n_i = 1} sum_{j != i} P_ji n_j R(n - e_i + e_j),

  which strictly decreases (observed count, total) at every step;
* ``subsample``: condition on the configuration just before the first
  allele dies in the urn process, which drops one observed allele per level.

Both accept ``arithmetic="rational"``; then P and pi are taken exactly (the
model's rational entries if it has them, otherwise the exact binary value of
each double) and results are ``Fraction``.
"""
from __future__ import annotations

import sys
from fractions import Fraction
from typing import Sequence

from .closedform import LeadingCoefficient
from .combinatorics import bounded_vectors, binom, lambda_coeff, log_lambda
from .configspace import SampleConfig
from .errors import DomainError, ModelError
from .model import MutationModel, is_irreducible_on

__all__ = ["RTable", "r_dp", "r_subsample", "q_leading_oracle", "dp_residual"]


class RTable:
    """Memo of R values for one model, one arithmetic and one method."""

    def __init__(self, model: MutationModel, arithmetic: str = "double", method: str = "dp"):
        if arithmetic not in ("double", "rational"):
            raise DomainError(f"arithmetic must be 'double' or 'rational', got {arithmetic!r}")
        if method not in ("dp", "subsample"):
            raise DomainError(f"method must be 'dp' or 'subsample', got {method!r}")
        self.model = model
        self.arithmetic = arithmetic
        self.method = method
        if arithmetic == "rational":
            self.P = model.exact_P()
            self.pi = model.exact_pi()
        else:
            self.P = model.P.tolist()
            self.pi = model.pi.tolist()
        self.memo: dict[SampleConfig, object] = {}

    def __call__(self, config: Sequence[int]):
        config = SampleConfig(config)
        if len(config) != self.model.K:
            raise DomainError(f"configuration has {len(config)} entries, model has K={self.model.K}")
        if config.total < 1:
            raise DomainError("configuration must be non-empty")
        if not is_irreducible_on(self.model, config.support):
            raise ModelError(f"P is not irreducible on the observed alleles {config.support}")
        limit = sys.getrecursionlimit()
        need = 4 * config.total + 200
        if need > limit:
            sys.setrecursionlimit(need)
        try:
            return self._dp(config) if self.method == "dp" else self._sub(config)
        finally:
            sys.setrecursionlimit(limit)

    def _base(self, n: SampleConfig):
        S = n.support
        if len(S) == 1:
            return self.pi[S[0]]
        return None

    def _dp(self, n: SampleConfig):
        hit = self.memo.get(n)
        if hit is not None:
            return hit
        val = self._base(n)
        if val is None:
            total = n.total
            acc = 0
            for i in n.support:
                if n[i] > 1:
                    acc += n[i] * (total - 1) * self._dp(n.add(i, -1))
                else:
                    for j in n.support:
                        if j != i and self.P[j][i] != 0:
                            acc += self.P[j][i] * n[j] * self._dp(n.move(i, j))
            val = acc / (Fraction(total * (total - 1)) if self.arithmetic == "rational"
                         else total * (total - 1))
        self.memo[n] = val
        return val

    def _sub(self, n: SampleConfig):
        hit = self.memo.get(n)
        if hit is not None:
            return hit
        val = self._base(n)
        if val is None:
            S = n.support
            total = n.total
            lower = [1 if c > 0 else 0 for c in n]
            acc = 0
            for i in S:
                upper = list(n)
                upper[i] = 1
                for m in range(sum(lower), total + 1):
                    denom = binom(total, m) * m * (m - 1)
                    for v in bounded_vectors(upper, m, lower):
                        w = 1
                        for a in S:
                            w *= binom(n[a], v[a])
                        v = SampleConfig(v)
                        for j in S:
                            if j == i or self.P[j][i] == 0:
                                continue
                            r = self._sub(v.move(i, j))
                            if self.arithmetic == "rational":
                                acc += self.P[j][i] * Fraction(w * v[j], denom) * r
                            else:
                                acc += self.P[j][i] * (w * v[j] / denom) * r
            val = acc
        self.memo[n] = val
        return val


def r_dp(model: MutationModel, config: Sequence[int], arithmetic: str = "double",
         table: RTable | None = None):
    table = table or RTable(model, arithmetic, "dp")
    return table(config)


def r_subsample(model: MutationModel, config: Sequence[int], arithmetic: str = "double",
                table: RTable | None = None):
    table = table or RTable(model, arithmetic, "subsample")
    return table(config)


def q_leading_oracle(model: MutationModel, config: Sequence[int], arithmetic: str = "double",
                     method: str = "dp", table: RTable | None = None) -> LeadingCoefficient:
    """Lambda(n) R(n) with R from one of the reference recursions."""
    import math

    config = SampleConfig(config)
    table = table or RTable(model, arithmetic, method)
    R = table(config)
    order = config.n_observed - 1
    if arithmetic == "rational":
        Q = lambda_coeff(config) * R
        return LeadingCoefficient(Q, R, order, math.log(Q) if Q > 0 else -math.inf)
    logQ = log_lambda(config) + math.log(R) if R > 0 else -math.inf
    return LeadingCoefficient(math.exp(logQ), R, order, logQ)


def dp_residual(table: RTable, config: Sequence[int]):
    """Left minus right side of the dp recursion at ``config``, using memo values."""
    n = SampleConfig(config)
    if n.n_observed < 2:
        return table(n) - table.pi[n.support[0]]
    total = n.total
    rhs = 0
    for i in n.support:
        if n[i] > 1:
            rhs += n[i] * (total - 1) * table(n.add(i, -1))
        else:
            for j in n.support:
                if j != i:
                    rhs += table.P[j][i] * n[j] * table(n.move(i, j))
    return total * (total - 1) * table(n) - rhs
