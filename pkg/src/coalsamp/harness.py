"""Accuracy of the leading-order approximation against the exact solver.

For a sample size n:

    err(n)      = |q(n) - q_approx(n)| / q(n)
    ExErr(n)    = sum over |n| = n of p(n) err(n),  p(n) = multinomial(n) q(n)
    WorstErr(n) = max over |n| = n of err(n)

Both q and q_approx are carried as logs; err is |expm1(log q_approx - log q)|.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import combinatorics as cb
from .closedform import log_q_leading_rows, q_approx
from .configspace import SampleConfig, format_config
from .errors import DomainError, ModelError, UnsupportedError
from .exact import _check_budget, exact_q, iter_levels
from .model import MutationModel, is_irreducible_on, reversibility_residual

__all__ = [
    "ErrorReport",
    "IdentityResult",
    "relative_error",
    "sweep_errors",
    "check_sweep_model",
    "emit_csv",
    "emit_plot_data",
    "emit_svg",
    "identity_suite",
    "DEFAULT_NMAX",
    "EXTENDED_NMAX",
]

logger = logging.getLogger(__name__)

DEFAULT_NMAX = 60
EXTENDED_NMAX = 120


@dataclass(frozen=True)
class ErrorReport:
    n: int
    ex_err: float
    worst_err: float
    worst_config: SampleConfig
    theta: float


def relative_error(model: MutationModel, config: Sequence[int]) -> float:
    config = SampleConfig(config)
    log_q = exact_q(model, config).log_q
    if log_q == -math.inf:
        raise AssertionError(f"q{tuple(config)} is zero under an ergodic model")
    log_qa, _ = q_approx(model, config)
    if log_qa == -math.inf:
        return 1.0
    return abs(math.expm1(log_qa - log_q))


def check_sweep_model(model: MutationModel, n_max: int):
    """Every support a level up to n_max can show must admit a closed form."""
    top = min(model.K, n_max)
    if top > 4:
        raise UnsupportedError(f"K={model.K} allows samples with {top} observed alleles "
                               f"at n={n_max}; closed forms stop at 4")
    for d in range(1, top + 1):
        for S in itertools.combinations(range(model.K), d):
            if not is_irreducible_on(model, S):
                raise ModelError(f"P is not irreducible on alleles {S}")
            if d == 4:
                res, pair = reversibility_residual(model, S)
                if res > model.rev_tol:
                    raise ModelError(
                        f"sweep aborted: samples observing all of {S} need a reversible P, "
                        f"but detailed balance fails for {pair} (residual {res:.3g})")


def sweep_errors(model: MutationModel, theta_list: Iterable[float], n_min: int, n_max: int,
                 **solver_kw) -> list[ErrorReport]:
    """ExErr and WorstErr for every (theta, n) with n_min <= n <= n_max.

    One exact table per theta is built level by level (two levels in memory)
    and each level is scanned once.  log Q does not depend on theta and is
    computed once per level.
    """
    thetas = [float(t) for t in theta_list]
    if not thetas:
        raise DomainError("no theta values given")
    if any(not t > 0 for t in thetas):
        raise DomainError("theta values must be positive")
    if not 1 <= n_min <= n_max:
        raise DomainError(f"need 1 <= n_min <= n_max, got {n_min}, {n_max}")
    check_sweep_model(model, n_max)
    _check_budget(model.K, n_max, False, None)
    lead_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
    reports = []
    for theta in thetas:
        mdl = model.with_theta(theta)
        for table in iter_levels(mdl, n_max, **solver_kw):
            if table.size < n_min:
                continue
            C = table.configs()
            if table.size not in lead_cache:
                order = (C > 0).sum(axis=1) - 1
                lead_cache[table.size] = (log_q_leading_rows(model, C), order,
                                          cb.log_multinomial_rows(C))
            log_Q, order, log_mult = lead_cache[table.size]
            log_q = table.log_values()
            log_qa = log_Q + order * math.log(theta)
            err = np.abs(np.expm1(log_qa - log_q))
            p = np.exp(log_mult + log_q)
            worst = int(np.argmax(err))
            reports.append(ErrorReport(table.size, float(np.sum(p * err)), float(err[worst]),
                                       SampleConfig(C[worst]), theta))
            logger.info("theta=%g n=%d ExErr=%.4g WorstErr=%.4g", theta, table.size,
                        reports[-1].ex_err, reports[-1].worst_err)
    return reports


# -- output -------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.12g}"


def emit_csv(reports: Sequence[ErrorReport], path: str | os.PathLike) -> None:
    if not reports:
        raise DomainError("no error reports to write")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["theta", "n", "ex_err", "worst_err", "worst_config"])
        for r in reports:
            w.writerow([_fmt(r.theta), r.n, _fmt(r.ex_err), _fmt(r.worst_err),
                        format_config(r.worst_config)])


def _by_theta(reports):
    out: dict[float, list[ErrorReport]] = {}
    for r in reports:
        out.setdefault(r.theta, []).append(r)
    return out


def emit_plot_data(reports: Sequence[ErrorReport], path: str | os.PathLike) -> list[str]:
    """One whitespace-separated series file per theta in directory ``path``.

    Columns: n, ex_err, worst_err, ratio.  Returns the files written.
    """
    if not reports:
        raise DomainError("no error reports to write")
    os.makedirs(path, exist_ok=True)
    written = []
    for theta, rows in _by_theta(reports).items():
        name = os.path.join(path, f"errors_theta_{_fmt(theta)}.dat")
        with open(name, "w") as f:
            f.write(f"# theta = {_fmt(theta)}\n# n ex_err worst_err worst_over_ex\n")
            for r in sorted(rows, key=lambda r: r.n):
                ratio = r.worst_err / r.ex_err if r.ex_err > 0 else float("nan")
                f.write(f"{r.n} {_fmt(r.ex_err)} {_fmt(r.worst_err)} {_fmt(ratio)}\n")
        written.append(name)
    return written


def emit_svg(reports: Sequence[ErrorReport], path: str | os.PathLike) -> None:
    """Two-panel line chart (ExErr, WorstErr against n) saved as SVG."""
    if not reports:
        raise DomainError("no error reports to write")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
    for theta, rows in sorted(_by_theta(reports).items()):
        rows = sorted(rows, key=lambda r: r.n)
        ns = [r.n for r in rows]
        axes[0].plot(ns, [r.ex_err for r in rows], label=f"theta = {theta:g}")
        axes[1].plot(ns, [r.worst_err for r in rows], label=f"theta = {theta:g}")
    for ax, title in zip(axes, ("expected relative error", "worst-case relative error")):
        ax.set_xlabel("sample size n")
        ax.set_title(title)
        ax.legend()
    fig.savefig(path, format="svg")
    plt.close(fig)


# -- identity suite -----------------------------------------------------------

@dataclass
class IdentityResult:
    name: str
    cases: int
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures


def _count_vectors(max_total: int, max_len: int):
    for L in range(1, max_len + 1):
        for total in range(0, max_total + 1):
            yield from cb.bounded_vectors([total] * L, total)


def identity_suite(max_size: int = 8, max_ab: int = 10, max_t: int = 3) -> list[IdentityResult]:
    """Closed form against brute force, in exact arithmetic, for every identity."""
    results = []

    def run(name, cases, closed, brute):
        failures = []
        count = 0
        for args in cases:
            count += 1
            a, b = closed(*args), brute(*args)
            if a != b:
                failures.append((args, a, b))
        results.append(IdentityResult(name, count, failures))

    run("ratio_sum",
        ((x, y, a, b) for a in range(1, max_size + 1) for b in range(1, a + 1)
         for x in range(1, max_size + 1) for y in range(x, max_size + 1)),
        cb.fact_ratio_sum, cb.fact_ratio_sum_brute)
    run("comb_harmonic",
        ((a, b) for a in range(1, max_ab + 1) for b in range(1, max_ab + 1)),
        cb.fact_comb_harmonic, cb.fact_comb_harmonic_brute)
    run("ratio2_sum",
        ((a, b) for a in range(1, max_ab + 1) for b in range(1, a + 1)),
        cb.fact_ratio2_sum, cb.fact_ratio2_sum_brute)

    vectors = [v for v in _count_vectors(max_size, 3) if sum(v) >= 1]
    run("hypergeometric_moment",
        ((n, m, t) for n in vectors for m in range(0, sum(n) + 1)
         for tt in range(0, min(max_t, sum(n)) + 1)
         for t in cb.bounded_vectors([tt] * len(n), tt)),
        cb.hyper_falling_moment, cb.hyper_falling_moment_brute)
    run("restricted_moment_tweak",
        ((n, m, j) for n in vectors for m in range(1, sum(n) + 1) for j in range(len(n))),
        cb.restricted_moment_tweak, cb.restricted_moment_tweak_brute)
    run("restricted_moment_mixed",
        ((n, m, j, k) for n in vectors if len(n) >= 2 for m in range(1, sum(n) + 1)
         for j in range(len(n)) for k in range(len(n)) if j != k),
        cb.restricted_moment_mixed, cb.restricted_moment_mixed_brute)
    return results
