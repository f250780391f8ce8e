import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coalsamp.closedform import q_leading
from coalsamp.errors import DomainError, ResourceError, SolverError
from coalsamp.exact import (equation_residual, exact_q, exact_q_table, first_level, iter_levels,
                            solve_level, table_bytes)
from coalsamp.model import (build_model, flip_model, primate_model, random_irreducible_model,
                            random_reversible_model, uniform_model)


def _log_rise(x, n):
    return math.lgamma(x + n) - math.lgamma(x)


def pim_log_q(theta, pi, config):
    """Parent-independent mutation: q(n) = prod rise(theta pi_i, n_i) / rise(theta, n)."""
    out = -_log_rise(theta, sum(config))
    for p, c in zip(pi, config):
        if c:
            out += _log_rise(theta * p, c)
    return out


def level_mass(table):
    return float(np.exp(table.log_p()).sum())


@pytest.mark.parametrize("theta", [1e-4, 0.01, 0.5, 3.0])
def test_flip_level_two_by_hand(theta):
    T = exact_q_table(flip_model(theta), 2)
    q11 = math.exp(T[1].log_q((1, 1)))
    q20 = math.exp(T[1].log_q((2, 0)))
    assert q11 == pytest.approx(theta / (2 * (1 + 2 * theta)), rel=1e-12, abs=0)
    assert q20 == pytest.approx((1 + theta) / (2 * (1 + 2 * theta)), rel=1e-12, abs=0)
    assert math.exp(T[1].log_q((0, 2))) + q20 + 2 * q11 == pytest.approx(1.0, abs=1e-12)


def test_flip_spot_value():
    assert exact_q(flip_model(0.01), (1, 1)).q == pytest.approx(4.90196e-3, rel=1e-5, abs=0)


def test_level_one_is_stationary():
    m = primate_model(0.01)
    T = first_level(m)
    for i in range(4):
        assert math.exp(T.log_q([int(j == i) for j in range(4)])) == pytest.approx(m.pi[i], rel=1e-14, abs=0)
    assert exact_q(m, (1, 0, 0, 0)).q == pytest.approx(m.pi[0], rel=1e-14, abs=0)
    assert abs(exact_q(m, (1, 0, 0, 0)).q - 0.308) <= 5e-4


@pytest.mark.parametrize("K,theta,n", [(2, 0.01, 40), (3, 0.2, 20), (4, 1.0, 15)])
def test_uniform_model_against_parent_independent_formula(K, theta, n):
    # uniform off-diagonal 1/(K-1) is parent-independent with rate theta K/(K-1)
    m = uniform_model(K, theta)
    theta_pim = theta * K / (K - 1)
    for T in exact_q_table(m, n)[1:]:
        ref = np.array([pim_log_q(theta_pim, [1 / K] * K, c) for c in T.configs()])
        assert np.max(np.abs(T.log_values() - ref)) <= 1e-11


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-3, 0.05, 2.0]))
def test_parent_independent_random(seed, theta):
    rng = np.random.default_rng(seed)
    pi = rng.dirichlet(np.ones(4))
    m = build_model(4, theta, np.tile(pi, (4, 1)))
    T = exact_q_table(m, 12, keep=False)[-1]
    ref = np.array([pim_log_q(theta, m.pi, c) for c in T.configs()])
    assert np.max(np.abs(T.log_values() - ref)) <= 1e-11


def test_large_n_survives_underflow():
    # log q near -770 is below the double floor for q itself
    th = 0.01
    val = exact_q(flip_model(th), (550, 550))
    ref = 2 * _log_rise(th, 550) - _log_rise(2 * th, 1100)
    assert val.underflow and val.q == 0.0
    assert val.log_q == pytest.approx(ref, rel=1e-13, abs=0)


def test_primate_normalization_and_residual():
    m = primate_model(0.01)
    tables = exact_q_table(m, 40)
    for T in tables:
        assert abs(level_mass(T) - 1) <= 1e-8
        assert np.all(np.isfinite(T.values)) and np.all(T.values >= 0)
        assert 1e-3 <= T.values.max() <= 1e3
    for k in (1, 2, 5, 12, 39):
        assert equation_residual(m, tables[k - 1], tables[k]) <= 1e-12
    assert math.exp(tables[0].log_q((0, 1, 0, 0))) == pytest.approx(m.pi[1], rel=1e-14, abs=0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1e-4, 0.01, 1.0]))
def test_random_models_residual_and_mass(seed, theta):
    m = random_irreducible_model(4, np.random.default_rng(seed), theta)
    tables = exact_q_table(m, 15)
    for k, T in enumerate(tables):
        assert abs(level_mass(T) - 1) <= 1e-8
        if k:
            assert equation_residual(m, tables[k - 1], T) <= 1e-12


def test_exchangeability_under_symmetric_model():
    T = exact_q_table(uniform_model(4, 0.05), 9, keep=False)[-1]
    for c in T.configs()[::7]:
        base = T.log_q(c)
        for perm in itertools.permutations(range(4)):
            assert T.log_q(c[list(perm)]) == pytest.approx(base, rel=1e-12, abs=0)


def test_jacobi_matches_gauss_seidel_and_is_worker_independent():
    m = primate_model(0.01)
    gs = exact_q_table(m, 20, keep=False)[-1]
    j1 = exact_q_table(m, 20, keep=False, method="jacobi", workers=1)[-1]
    j3 = exact_q_table(m, 20, keep=False, method="jacobi", workers=3)[-1]
    assert np.array_equal(j1.values, j3.values) and j1.log_scale == j3.log_scale
    assert np.max(np.abs(gs.log_values() - j1.log_values())) <= 1e-12


def test_leading_order_limit_small():
    m = random_reversible_model(4, np.random.default_rng(5))
    configs = [(1, 1, 0, 0), (2, 1, 1, 0), (1, 1, 1, 1), (3, 2, 1, 0)]
    dev = {}
    for th in (1e-4, 1e-5):
        mt = m.with_theta(th)
        for c in configs:
            Q = q_leading(m, c).value
            d = sum(x > 0 for x in c) - 1
            dev[th, c] = abs(exact_q(mt, c).q / th ** d - Q)
    for c in configs:
        assert 6 <= dev[1e-4, c] / dev[1e-5, c] <= 14


def test_errors():
    m = flip_model(0.01)
    with pytest.raises(DomainError):
        solve_level(m.with_theta(0.0), first_level(m), 2)
    with pytest.raises(DomainError):
        solve_level(m, first_level(m), 3)
    with pytest.raises(DomainError):
        exact_q(m, (0, 0))
    with pytest.raises(DomainError):
        exact_q(m, (1, 1, 1))
    with pytest.raises(DomainError):
        exact_q_table(m, 0)
    with pytest.raises(SolverError) as info:
        solve_level(primate_model(0.5), first_level(primate_model(0.5)), 2, max_sweeps=0)
    assert info.value.residual > 0


def test_memory_budget(monkeypatch):
    need = table_bytes(4, 120, keep=False)
    assert need > 100 * 2**20
    with pytest.raises(ResourceError):
        exact_q_table(primate_model(), 120, budget_mb=100)
    monkeypatch.setenv("COALSAMP_MEM_BUDGET_MB", "1")
    with pytest.raises(ResourceError):
        exact_q_table(primate_model(), 60)


def test_streaming_callback_sees_every_level():
    seen = []
    out = exact_q_table(flip_model(0.1), 6, keep=False, callback=lambda t: seen.append(t.size))
    assert seen == list(range(1, 7)) and len(out) == 1 and out[0].size == 6
    assert [t.size for t in iter_levels(flip_model(0.1), 3)] == [1, 2, 3]
