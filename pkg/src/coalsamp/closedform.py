"""Leading-order coefficient Q(n) of q(n) as theta -> 0, in closed form.

q(n) = theta^(d-1) Q(n) + O(theta^d) with d the number of observed alleles.
We work with the rescaled R(n) = Q(n) / Lambda(n), a probability, and
multiply by Lambda in the log domain.

    d = 1   R = pi_a
    d = 2   any P irreducible on the observed alleles
    d = 3   any P irreducible on the observed alleles (alpha/beta kernels)
    d = 4   P reversible and irreducible on the observed alleles
            (gamma/delta kernels)

The kernels below are written once and evaluated on Python ints (double
results), ``Fraction`` counts (exact results) or integer numpy arrays (a
whole level at a time).  ``H`` is a callable returning harmonic numbers.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .combinatorics import (HarmonicTable, bounded_vectors, harmonic, lambda_coeff, log_lambda,
                            log_lambda_rows, multichoose_ratio)
from .configspace import SampleConfig
from .errors import DomainError, ModelError, UnsupportedError
from .model import MutationModel, is_irreducible_on, reversibility_residual

__all__ = [
    "LeadingCoefficient",
    "q_leading",
    "q_approx",
    "q_simple",
    "log_q_leading_rows",
    "o3_alpha",
    "o3_beta",
    "o3_alpha_brute",
    "o3_beta_brute",
    "o4_gamma",
    "o4_delta",
    "o4_zeta",
    "o4_zeta_brute",
    "o4_delta_brute",
    "rescaled",
]

_HTABLE = HarmonicTable(512)


def _float_H(k):
    top = int(np.max(k))
    if top >= len(_HTABLE):
        _HTABLE.ensure(2 * top)
    return _HTABLE.values[k]


def _exact_H(k):
    return harmonic(int(k))


def _f2(x):
    return x * (x - 1)


def _f3(x):
    return x * (x - 1) * (x - 2)


# -- kernels ------------------------------------------------------------------

def _alpha(ni, nj, nk, H: Callable):
    n = ni + nj + nk
    hd = H(n) - H(ni - 1)
    return (_f2(nj) / (n * (nj + nk - 1)) - ni * nj / (n * (ni + nk))
            - 2 * ni * nj * nk / (n * _f2(nj + nk))
            + 2 * ni * nj * nk / _f3(nj + nk + 1) * hd)


def _beta(ni, nj, nk, H: Callable):
    n = ni + nj + nk
    hd = H(n) - H(ni - 1)
    return (nj * nk / (n * (nj + nk - 1)) + 2 * ni * nj * nk / (n * _f2(nj + nk))
            - 2 * ni * nj * nk / _f3(nj + nk + 1) * hd)


def _gamma(ni, nj, nk, nl, H: Callable):
    n = ni + nj + nk + nl
    h_l = H(n) - H(nl - 1)
    h_kl = H(n) - H(nk + nl - 1)
    inner = ((ni - 1) / (2 * (ni + nj + nk - 1)) - 2 * nj * nl / _f2(ni + nj + nk)
             + nl / (2 * (nj + nk + nl))
             - (nl * (ni - 1) / ((nk + nl) * (ni + nj - 1)) - 2 * nj * nl / _f2(ni + nj)))
    return (ni / n * inner
            + 2 * ni * nj * nl / _f3(ni + nj + nk + 1) * h_l
            - 2 * ni * nj * nl / _f3(ni + nj + 1) * h_kl)


def _delta(ni, nj, nk, nl, H: Callable):
    n = ni + nj + nk + nl
    h_l = H(n) - H(nl - 1)
    h_kl = H(n) - H(nk + nl - 1)
    inner = ((nj / (ni + nj + nk - 1) + 2 * nj * nl / _f2(ni + nj + nk))
             - (nj * nl / ((nk + nl) * (ni + nj - 1)) + 2 * nj * nl / _f2(ni + nj)))
    return (ni / n * inner
            - 2 * ni * nj * nl / _f3(ni + nj + nk + 1) * h_l
            + 2 * ni * nj * nl / _f3(ni + nj + 1) * h_kl)


def _zeta(ni, nj, nk, nl, H: Callable):
    n = ni + nj + nk + nl
    s3 = ni + nj + nk
    out = (s3 / nl * _f2(ni) / _f2(s3) + ni / (nj + nk + nl)
           + 2 * ni * (nj + nk) / _f2(s3) * (n / (s3 + 1) * (H(n) - H(nl - 1)) - 1))
    for a, b in ((nj, nk), (nk, nj)):
        out = out - ((ni + a) / (b + nl) * _f2(ni) / _f2(ni + a)
                     + 2 * ni * a / _f2(ni + a) * (n / (ni + a + 1) * (H(n) - H(b + nl - 1)) - 1))
    return nl / n * out


# -- public kernel wrappers ---------------------------------------------------

def _observed_indices(config: Sequence[int], idx: Sequence[int], d: int):
    config = SampleConfig(config)
    if config.n_observed != d:
        raise DomainError(f"kernel needs exactly {d} observed alleles, {config} has {config.n_observed}")
    if len(set(idx)) != d or any(not 0 <= a < len(config) or config[a] == 0 for a in idx):
        raise DomainError(f"indices {tuple(idx)} must be {d} distinct observed alleles of {config}")
    return config


def _counts(config, idx, exact):
    if exact:
        return [Fraction(config[a]) for a in idx], _exact_H
    return [int(config[a]) for a in idx], _float_H


def o3_alpha(config, i, j, k, exact=False):
    config = _observed_indices(config, (i, j, k), 3)
    c, H = _counts(config, (i, j, k), exact)
    return _alpha(*c, H)


def o3_beta(config, i, j, k, exact=False):
    config = _observed_indices(config, (i, j, k), 3)
    c, H = _counts(config, (i, j, k), exact)
    return _beta(*c, H)


def o4_gamma(config, i, j, k, l, exact=False):
    config = _observed_indices(config, (i, j, k, l), 4)
    c, H = _counts(config, (i, j, k, l), exact)
    return _gamma(*c, H)


def o4_delta(config, i, j, k, l, exact=False):
    config = _observed_indices(config, (i, j, k, l), 4)
    c, H = _counts(config, (i, j, k, l), exact)
    return _delta(*c, H)


def o4_zeta(config, i, j, k, l, exact=False):
    config = _observed_indices(config, (i, j, k, l), 4)
    c, H = _counts(config, (i, j, k, l), exact)
    return _zeta(*c, H)


def _defining_sum(config, killed: int, weight: Callable[[tuple], int]) -> Fraction:
    """sum_m 1/(m^2 (m-1)) sum over subsamples mvec, positive on the support,
    with mvec[killed] == 1, of [C(n,mvec)/C(n,m)] * weight(mvec)."""
    n = list(config)
    total = sum(n)
    lower = [1 if c > 0 else 0 for c in n]
    upper = list(n)
    upper[killed] = 1
    out = Fraction(0)
    for m in range(sum(lower), total + 1):
        inner = Fraction(0)
        for v in bounded_vectors(upper, m, lower):
            w = weight(v)
            if w:
                inner += multichoose_ratio(n, v) * w
        out += inner / (m * m * (m - 1))
    return out


def o3_alpha_brute(config, i, j, k) -> Fraction:
    config = _observed_indices(config, (i, j, k), 3)
    return _defining_sum(config, i, lambda v: v[j] * (v[j] + 1))


def o3_beta_brute(config, i, j, k) -> Fraction:
    config = _observed_indices(config, (i, j, k), 3)
    return _defining_sum(config, i, lambda v: v[j] * v[k])


def o4_zeta_brute(config, i, j, k, l) -> Fraction:
    config = _observed_indices(config, (i, j, k, l), 4)
    return _defining_sum(config, l, lambda v: v[i] * (v[i] + 1))


def o4_delta_brute(config, i, j, k, l) -> Fraction:
    config = _observed_indices(config, (i, j, k, l), 4)
    return _defining_sum(config, l, lambda v: v[i] * v[j])


# -- assembly -------------------------------------------------------------------

def _rescaled(S, cnt, pi, P, H, use_corollary=False, symmetric=False):
    """R for observed alleles S with counts cnt[a] (scalars or arrays)."""
    d = len(S)
    if d == 1:
        return pi[S[0]] + 0 * cnt[S[0]]
    n = sum(cnt[a] for a in S)
    out = 0
    if d == 2:
        for i, j in itertools.permutations(S, 2):
            out = out + cnt[j] / n * pi[j] * P[j][i]
        return out
    if d == 3:
        if use_corollary:
            for a in S:
                b, c = [x for x in S if x != a]
                out = out + cnt[a] / n * pi[a] * P[a][b] * P[a][c]
            return out
        for i, j, k in itertools.permutations(S, 3):
            ni, nj, nk = cnt[i], cnt[j], cnt[k]
            out = (out + pi[j] * P[j][i] * P[j][k] * _alpha(ni, nj, nk, H)
                   + pi[k] * P[k][j] * P[j][i] * _beta(ni, nj, nk, H))
        return out
    if symmetric:
        # the star weight is symmetric in j and k; pair (j, k) with (k, j)
        for i, j, k, l in itertools.permutations(S, 4):
            ni, nj, nk, nl = cnt[i], cnt[j], cnt[k], cnt[l]
            out = out + pi[i] * P[i][j] * P[i][k] * P[j][l] * _delta(ni, nj, nk, nl, H)
            if j < k:
                g = _gamma(ni, nj, nk, nl, H) + _gamma(ni, nk, nj, nl, H)
                out = out + pi[i] * P[i][j] * P[i][k] * P[i][l] * g
        return out
    for i, j, k, l in itertools.permutations(S, 4):
        ni, nj, nk, nl = cnt[i], cnt[j], cnt[k], cnt[l]
        out = (out + pi[i] * P[i][j] * P[i][k] * P[i][l] * _gamma(ni, nj, nk, nl, H)
               + pi[i] * P[i][j] * P[i][k] * P[j][l] * _delta(ni, nj, nk, nl, H))
    return out


def _check_model(model: MutationModel, S: Sequence[int]):
    d = len(S)
    if d > 4:
        raise UnsupportedError(f"no closed form for {d} observed alleles (at most 4)")
    if not is_irreducible_on(model, S):
        raise ModelError(f"P is not irreducible on the observed alleles {tuple(S)}")
    if d == 4:
        res, pair = reversibility_residual(model, S)
        if res > model.rev_tol:
            raise ModelError(f"P is not reversible on {tuple(S)}: detailed balance fails for "
                             f"alleles {pair} (relative residual {res:.3g} > {model.rev_tol:g})")


class LeadingCoefficient(NamedTuple):
    value: float
    rescaled: float
    order: int
    log_value: float


def rescaled(model: MutationModel, config: Sequence[int], *, exact: bool = False,
             use_corollary: bool = False, symmetric: bool = False, check: bool = True):
    """R(n) = Q(n) / Lambda(n) from the closed forms."""
    config = SampleConfig(config)
    if len(config) != model.K:
        raise DomainError(f"configuration has {len(config)} entries, model has K={model.K}")
    if config.total < 1:
        raise DomainError("configuration must be non-empty")
    S = config.support
    if check:
        _check_model(model, S)
    if exact:
        cnt = [Fraction(c) for c in config]
        return _rescaled(S, cnt, model.exact_pi(), model.exact_P(), _exact_H,
                         use_corollary, symmetric)
    cnt = [int(c) for c in config]
    return float(_rescaled(S, cnt, model.pi, model.P, _float_H, use_corollary, symmetric))


def q_leading(model: MutationModel, config: Sequence[int], *, exact: bool = False,
              use_corollary: bool = False, symmetric: bool = False) -> LeadingCoefficient:
    """Q(n), the coefficient of theta^(d-1) in q(n).

    For three observed alleles the general formula is used; pass
    ``use_corollary=True`` for the reversible shortcut.  ``symmetric=True``
    halves the gamma terms by pairing j with k.  With ``exact=True`` the
    result fields are Fractions (``log_value`` stays a float).
    """
    config = SampleConfig(config)
    R = rescaled(model, config, exact=exact, use_corollary=use_corollary, symmetric=symmetric)
    order = config.n_observed - 1
    if exact:
        lam = lambda_coeff(config)
        Q = lam * R
        return LeadingCoefficient(Q, R, order, math.log(Q) if Q > 0 else -math.inf)
    logQ = log_lambda(config) + math.log(R) if R > 0 else -math.inf
    return LeadingCoefficient(math.exp(logQ), R, order, logQ)


def q_approx(model: MutationModel, config: Sequence[int]) -> tuple[float, float]:
    """(log q_approx, q_approx) with q_approx = theta^(d-1) Q(n)."""
    config = SampleConfig(config)
    lead = q_leading(model, config)
    d = lead.order
    if d == 0:
        return lead.log_value, lead.value
    if model.theta == 0:
        return -math.inf, 0.0
    log_qa = d * math.log(model.theta) + lead.log_value
    return log_qa, math.exp(log_qa)


def q_simple(model: MutationModel, config: Sequence[int]) -> float:
    """Lambda(n) sum_i (n_i/n) pi_i prod_{j != i} P_ij.

    Correct for parent-independent P restricted to the observed alleles,
    and for reversible P with at most three of them; not in general.
    """
    config = SampleConfig(config)
    S = config.support
    n = config.total
    out = 0.0
    for i in S:
        w = config[i] / n * model.pi[i]
        for j in S:
            if j != i:
                w *= model.P[i, j]
        out += w
    return float(lambda_coeff(config)) * out


def log_q_leading_rows(model: MutationModel, configs: np.ndarray) -> np.ndarray:
    """log Q for every row of an (N, K) count matrix, grouped by support."""
    configs = np.asarray(configs, dtype=np.int64)
    N, K = configs.shape
    if K != model.K:
        raise DomainError(f"configurations have {K} columns, model has K={model.K}")
    R = np.empty(N)
    mask = configs > 0
    keys = mask @ (1 << np.arange(K))
    for key in np.unique(keys):
        rows = np.flatnonzero(keys == key)
        S = tuple(a for a in range(K) if key >> a & 1)
        _check_model(model, S)
        cnt = {a: configs[rows, a] for a in S}
        R[rows] = _rescaled(S, cnt, model.pi, model.P, _float_H)
    with np.errstate(divide="ignore"):
        return log_lambda_rows(configs) + np.log(R)
