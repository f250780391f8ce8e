"""Exact sampling probabilities q(n | theta, P) from the coalescent recursion

    n (n - 1 + theta) q(n) = sum_i n_i (n_i - 1) q(n - e_i)
                             + theta sum_{i,j} P_ji n_i q(n - e_i + e_j),

with q(e_i) = pi_i.  Coalescence terms reach the previous level only, so
each level is a linear system with the previous level on the right-hand
side.  The j == i mutation terms move to the diagonal, which then strictly
dominates the remaining same-level coupling for every m >= 2; Gauss-Seidel
(or Jacobi, for deterministic parallel sweeps) converges geometrically.

The unknowns are the unordered-sample probabilities p(n) = multinomial(n) q(n)
rather than q itself.  Within one level q spans far more than the double
range (1/multinomial(n) alone reaches 1e-330 at n = 1100, K = 2) while p
sums to one.  Multiplying the recursion by multinomial(n) leaves small
rational weights: (n_i - 1) n on coalescence children and
theta P_ji (n_j + 1) on mutation moves.  Every level is also rescaled to a
maximum of one and carries the accumulated natural-log scale.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit

from .combinatorics import log_multinomial, log_multinomial_rows
from .configspace import SampleConfig, count_configs, level_configs, neighbors, rank, rank_rows
from .errors import DomainError, ResourceError, SolverError
from .model import MutationModel

__all__ = [
    "LevelTable",
    "ExactValue",
    "solve_level",
    "first_level",
    "exact_q",
    "exact_q_table",
    "iter_levels",
    "equation_residual",
    "memory_budget_mb",
    "table_bytes",
    "RESIDUAL_TOL",
]

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-13
DEFAULT_BUDGET_MB = 1024
_TINY = 1e-290


@dataclass
class LevelTable:
    """One level of the exact solution.

    ``values[r] * exp(log_scale)`` is p(n) = multinomial(n) q(n) for the
    configuration of rank r; use :meth:`log_values` or :meth:`log_q` for q.
    """

    K: int
    size: int
    values: np.ndarray
    log_scale: float
    sweeps: int = 0
    residual: float = 0.0

    def configs(self) -> np.ndarray:
        return level_configs(self.K, self.size)

    def log_values(self) -> np.ndarray:
        """log q for every configuration, in rank order."""
        with np.errstate(divide="ignore"):
            return np.log(self.values) + self.log_scale - log_multinomial_rows(self.configs())

    def log_p(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.values) + self.log_scale

    def log_q(self, config: Sequence[int]) -> float:
        v = self.values[rank(config).index]
        if v <= 0:
            return -math.inf
        return math.log(v) + self.log_scale - log_multinomial(config)


class ExactValue(NamedTuple):
    log_q: float
    q: float
    underflow: bool


def memory_budget_mb() -> float:
    return float(os.environ.get("COALSAMP_MEM_BUDGET_MB", DEFAULT_BUDGET_MB))


def table_bytes(K: int, n_max: int, keep: bool = True) -> int:
    """Rough peak allocation for building levels 1..n_max."""
    top = count_configs(K, n_max)
    stored = sum(count_configs(K, m) for m in range(1, n_max + 1)) if keep else 2 * top
    # per-state working set of the top level: configs, ranks, sparse coupling
    transient = top * (8 * K * 3 + K * (K - 1) * 24 + 64)
    return 8 * stored + transient


def _check_budget(K: int, n_max: int, keep: bool, budget_mb: float | None):
    budget = memory_budget_mb() if budget_mb is None else budget_mb
    need = table_bytes(K, n_max, keep)
    if need > budget * 2**20:
        raise ResourceError(
            f"levels up to n={n_max} for K={K} need about {need / 2**20:.0f} MB, "
            f"budget is {budget:.0f} MB (set COALSAMP_MEM_BUDGET_MB to raise it)")


def first_level(model: MutationModel) -> LevelTable:
    pi = np.asarray(model.pi, dtype=float)
    top = pi.max()
    return LevelTable(model.K, 1, pi / top, math.log(top))


@njit(cache=True)
def _gauss_seidel_sweep(x, b, diag, indptr, indices, coef):
    for r in range(x.shape[0]):
        s = b[r]
        for p in range(indptr[r], indptr[r + 1]):
            s += coef[p] * x[indices[p]]
        x[r] = s / diag[r]


class _LevelSystem:
    """diag * x = b + A x for one level of p values, in the previous level's scale."""

    def __init__(self, model: MutationModel, prev: LevelTable, m: int):
        K, theta, P = model.K, model.theta, model.P
        C = level_configs(K, m)
        N = len(C)
        self.N = N
        self.diag = m * (m - 1 + theta) - theta * (C * np.diag(P)[None, :]).sum(axis=1)

        b = np.zeros(N)
        for i in range(K):
            rows = np.flatnonzero(C[:, i] >= 2)
            if rows.size == 0:
                continue
            child = C[rows].copy()
            child[:, i] -= 1
            ni = C[rows, i].astype(float)
            b[rows] += (ni - 1) * m * prev.values[rank_rows(child)]
        self.b = b

        rows_l, cols_l, coef_l = [], [], []
        for i in range(K):
            src = np.flatnonzero(C[:, i] >= 1)
            if src.size == 0:
                continue
            for j in range(K):
                if j == i or P[j, i] == 0:
                    continue
                tgt = C[src].copy()
                tgt[:, i] -= 1
                tgt[:, j] += 1
                rows_l.append(src)
                cols_l.append(rank_rows(tgt))
                coef_l.append(theta * P[j, i] * (C[src, j] + 1))
        if rows_l:
            rows = np.concatenate(rows_l)
            cols = np.concatenate(cols_l)
            coef = np.concatenate(coef_l).astype(float)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            coef = np.zeros(0)
        self.A = sp.csr_matrix((coef, (rows, cols)), shape=(N, N))
        self.A.sort_indices()

    def residual(self, x: np.ndarray) -> float:
        lhs = self.diag * x
        r = np.abs(lhs - self.b - self.A @ x)
        scale = np.maximum(lhs, self.b)
        ok = scale > _TINY
        rel = np.where(ok, r / np.where(ok, scale, 1.0), r)
        return float(rel.max()) if rel.size else 0.0


def _jacobi_step(system: _LevelSystem, x: np.ndarray, workers: int) -> np.ndarray:
    N = system.N
    if workers <= 1 or N < 2 * workers:
        return (system.b + system.A @ x) / system.diag
    bounds = np.linspace(0, N, workers + 1).astype(int)
    out = np.empty(N)

    def part(k):
        lo, hi = bounds[k], bounds[k + 1]
        out[lo:hi] = (system.b[lo:hi] + system.A[lo:hi] @ x) / system.diag[lo:hi]

    with ThreadPoolExecutor(workers) as pool:
        list(pool.map(part, range(workers)))
    return out


def solve_level(model: MutationModel, prev: LevelTable, m: int, *,
                method: str = "gauss-seidel", workers: int = 1,
                tol: float = RESIDUAL_TOL, max_sweeps: int | None = None) -> LevelTable:
    """Solve level ``m`` given the converged level ``m - 1``.

    ``method`` is ``"gauss-seidel"`` (single-threaded, ascending rank order)
    or ``"jacobi"`` (two buffers; bit-identical for any ``workers``).
    Raises :class:`SolverError` if the relative residual is still above
    ``tol`` after ``max_sweeps`` (default ``10 m + 200``).
    """
    if prev.size != m - 1 or m < 2:
        raise DomainError(f"level {m} needs the level {m - 1} table, got level {prev.size}")
    if not model.theta > 0:
        raise DomainError("the exact recursion needs theta > 0")
    if method not in ("gauss-seidel", "jacobi"):
        raise DomainError(f"unknown method {method!r}")
    max_sweeps = 10 * m + 200 if max_sweeps is None else max_sweeps

    system = _LevelSystem(model, prev, m)
    # pure-coalescence predictor
    x = system.b / system.diag
    res = system.residual(x)
    sweeps = 0
    while res > tol and sweeps < max_sweeps:
        if method == "gauss-seidel":
            _gauss_seidel_sweep(x, system.b, system.diag, system.A.indptr,
                                system.A.indices, system.A.data)
        else:
            x = _jacobi_step(system, x, workers)
        sweeps += 1
        res = system.residual(x)
    if res > tol:
        raise SolverError(f"level {m} did not converge in {sweeps} sweeps "
                          f"(relative residual {res:.3e})", residual=res)

    top = x.max()
    if not top > 0:
        raise SolverError(f"level {m} has no positive entries", residual=res)
    return LevelTable(model.K, m, x / top, prev.log_scale + math.log(top), sweeps, res)


def iter_levels(model: MutationModel, n_max: int, **kw):
    """Yield level tables 1..n_max, holding only two levels at a time."""
    table = first_level(model)
    yield table
    for m in range(2, n_max + 1):
        table = solve_level(model, table, m, **kw)
        logger.debug("level %d: %d states, %d sweeps, residual %.2e",
                     m, len(table.values), table.sweeps, table.residual)
        yield table


def exact_q_table(model: MutationModel, n_max: int, *, keep: bool = True,
                  callback: Callable[[LevelTable], None] | None = None,
                  budget_mb: float | None = None, **kw) -> list[LevelTable]:
    """Level tables for sizes 1..n_max (index 0 holds level 1).

    With ``keep=False`` only the last level is returned; pass ``callback`` to
    see every level as it is produced.
    """
    if n_max < 1:
        raise DomainError(f"n_max must be at least 1, got {n_max}")
    _check_budget(model.K, n_max, keep, budget_mb)
    out = []
    for table in iter_levels(model, n_max, **kw):
        if callback is not None:
            callback(table)
        if keep:
            out.append(table)
        else:
            out = [table]
    return out


def exact_q(model: MutationModel, config: Sequence[int], **kw) -> ExactValue:
    config = SampleConfig(config)
    if len(config) != model.K:
        raise DomainError(f"configuration has {len(config)} entries, model has K={model.K}")
    if config.total < 1:
        raise DomainError("configuration must be non-empty")
    table = exact_q_table(model, config.total, keep=False, **kw)[-1]
    log_q = table.log_q(config)
    q = math.exp(log_q) if log_q > -745 else 0.0
    return ExactValue(log_q, q, q == 0.0 and log_q > -math.inf)


def equation_residual(model: MutationModel, prev: LevelTable, cur: LevelTable) -> float:
    """Max relative residual of the recursion on ``cur``, recomputed state by
    state from :func:`configspace.neighbors` (independent of the solver).

    The recursion is checked in q form, multiplied through by
    multinomial(n); the weights come from log multinomials directly.
    """
    theta, P = model.theta, model.P
    shift = math.exp(prev.log_scale - cur.log_scale)
    worst = 0.0
    for idx, row in enumerate(cur.configs()):
        n = SampleConfig(row)
        m = n.total
        lm = log_multinomial(n)
        p_n = cur.values[idx]
        lhs = m * (m - 1 + theta) * p_n
        rhs = 0.0
        coal, mut = neighbors(n)
        for i, child, w in coal:
            if w:
                rhs += w * math.exp(lm - log_multinomial(child)) * prev.values[rank(child).index] * shift
        for i in n.support:
            rhs += theta * P[i, i] * n[i] * p_n
        for i, j, tgt in mut:
            rhs += theta * P[j, i] * n[i] * math.exp(lm - log_multinomial(tgt)) * cur.values[rank(tgt).index]
        scale = max(lhs, rhs)
        if scale > _TINY:
            worst = max(worst, abs(lhs - rhs) / scale)
    return worst
