import itertools
import math
from fractions import Fraction as F
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coalsamp import closedform as cf
from coalsamp.combinatorics import lambda_coeff
from coalsamp.configspace import level_configs
from coalsamp.errors import DomainError, ModelError, UnsupportedError
from coalsamp.model import (build_model, flip_model, load_model, primate_model,
                            random_irreducible_model, random_reversible_model, uniform_model)
from coalsamp.oracle import RTable, q_leading_oracle

MODELS = Path(__file__).resolve().parents[1] / "models"


def _configs(K, max_total, d):
    for m in range(1, max_total + 1):
        for c in level_configs(K, m):
            if (c > 0).sum() == d:
                yield tuple(int(x) for x in c)


# -- examples -------------------------------------------------------------------

def test_monomorphic_is_stationary_mass():
    assert cf.q_leading(flip_model(), (3, 0)).value == 0.5
    m = primate_model()
    for i in range(4):
        c = [0] * 4
        c[i] = 7
        assert cf.q_leading(m, c).value == pytest.approx(m.pi[i], rel=1e-15, abs=0)


def test_two_alleles_flip():
    lead = cf.q_leading(flip_model(), (2, 1))
    assert lead.value == pytest.approx(0.25, rel=1e-15, abs=0)
    assert lead.order == 1
    assert cf.q_leading(flip_model(), (2, 1), exact=True).value == F(1, 4)


def test_uniform_four_alleles_all_ones():
    m = uniform_model(4)
    lead = cf.q_leading(m, (1, 1, 1, 1), exact=True)
    assert lead.value == F(1, 648) and lead.rescaled == F(1, 108)
    assert cf.q_leading(m, (1, 1, 1, 1)).value == pytest.approx(1 / 648, rel=1e-13, abs=0)


def test_kernel_values_all_ones():
    one3, one4 = (1, 1, 1), (1, 1, 1, 1)
    assert cf.o3_alpha(one3, 0, 1, 2, exact=True) == F(1, 9)
    assert cf.o3_beta(one3, 0, 1, 2, exact=True) == F(1, 18)
    assert cf.o3_alpha_brute(one3, 0, 1, 2) == F(1, 9)
    assert cf.o3_beta_brute(one3, 0, 1, 2) == F(1, 18)
    assert cf.o3_alpha(one3, 0, 1, 2) == pytest.approx(1 / 9, rel=1e-14, abs=0)
    for idx in itertools.permutations(range(4)):
        assert cf.o4_delta(one4, *idx, exact=True) == F(1, 48)
        assert cf.o4_gamma(one4, *idx, exact=True) == F(1, 48)
        assert cf.o4_zeta(one4, *idx, exact=True) == F(1, 24)
    assert cf.o4_delta(one4, 0, 1, 2, 3) == pytest.approx(1 / 48, rel=1e-12, abs=0)
    assert cf.o4_gamma(one4, 0, 1, 2, 3) == pytest.approx(1 / 48, rel=1e-12, abs=0)
    assert cf.o4_delta_brute(one4, 0, 1, 2, 3) == F(1, 48)
    assert cf.o4_zeta_brute(one4, 0, 1, 2, 3) == F(1, 24)


def test_alpha_first_term_vanishes_for_singleton_j():
    # with n_j = 1 the fall(n_j, 2) term drops out; the rest must still match
    for c in [(2, 1, 3), (4, 1, 1), (1, 1, 5)]:
        assert cf.o3_alpha(c, 0, 1, 2, exact=True) == cf.o3_alpha_brute(c, 0, 1, 2)


def test_kernel_index_errors():
    with pytest.raises(DomainError):
        cf.o3_alpha((1, 1, 1), 0, 0, 1)
    with pytest.raises(DomainError):
        cf.o3_alpha((1, 1, 0, 1), 0, 1, 2)
    with pytest.raises(DomainError):
        cf.o4_gamma((1, 1, 1), 0, 1, 2, 3)


# -- kernels against their defining sums ----------------------------------------

def test_three_allele_kernels_match_definitions():
    for c in _configs(3, 10, 3):
        for i, j, k in itertools.permutations(range(3)):
            a_ex, b_ex = cf.o3_alpha_brute(c, i, j, k), cf.o3_beta_brute(c, i, j, k)
            assert cf.o3_alpha(c, i, j, k, exact=True) == a_ex
            assert cf.o3_beta(c, i, j, k, exact=True) == b_ex
            assert cf.o3_alpha(c, i, j, k) == pytest.approx(float(a_ex), rel=1e-11, abs=0)
            assert cf.o3_beta(c, i, j, k) == pytest.approx(float(b_ex), rel=1e-11, abs=0)


def test_four_allele_kernels_match_definitions():
    for c in _configs(4, 10, 4):
        for i, j, k, l in itertools.permutations(range(4)):
            d_ex = cf.o4_delta_brute(c, i, j, k, l)
            z_ex = cf.o4_zeta_brute(c, i, j, k, l)
            assert cf.o4_delta(c, i, j, k, l, exact=True) == d_ex
            assert cf.o4_zeta(c, i, j, k, l, exact=True) == z_ex
            assert cf.o4_delta(c, i, j, k, l) == pytest.approx(float(d_ex), rel=1e-11, abs=0)
            # the star weight is fixed by the symmetrised defining sum
            g = cf.o4_gamma(c, i, j, k, l, exact=True) + cf.o4_gamma(c, i, k, j, l, exact=True)
            assert g == (z_ex + cf.o4_zeta_brute(c, i, k, j, l)) / 2
            gf = cf.o4_gamma(c, i, j, k, l) + cf.o4_gamma(c, i, k, j, l)
            assert gf == pytest.approx(float(g), rel=1e-11, abs=0)


# -- q_approx -----------------------------------------------------------------

def test_q_approx_examples():
    m = flip_model(0.01)
    assert cf.q_approx(m, (1, 1))[1] == pytest.approx(0.005, rel=1e-14, abs=0)
    assert cf.q_approx(m, (2, 0))[1] == pytest.approx(0.5, rel=1e-15, abs=0)


def _reversibilized(model):
    # symmetrise the probability flux pi_i P_ij; pi stays stationary
    flux = model.pi[:, None] * model.P
    flux = (flux + flux.T) / 2
    return build_model(model.K, model.theta, flux / model.pi[:, None], pi=model.pi, rev_tol=1e-10)


def test_q_approx_four_alleles_primate():
    P = primate_model(0.01)
    c = (1, 1, 1, 1)
    # the published matrix is reversible only to ~0.2%, and the four-allele
    # closed form inherits an error of that order times the tree weights
    rel = abs(cf.q_approx(P, c)[1] / (0.01 ** 3 * q_leading_oracle(P, c).value) - 1)
    assert 1e-6 < rel < 1e-4
    Pr = _reversibilized(P)
    assert np.max(np.abs(Pr.P - P.P)) < 2e-4
    log_qa, qa = cf.q_approx(Pr, c)
    ref = 0.01 ** 3 * q_leading_oracle(Pr, c).value
    assert qa == pytest.approx(ref, rel=1e-10, abs=0)
    assert log_qa == pytest.approx(math.log(ref), rel=1e-12, abs=0)


def test_q_approx_theta_zero():
    m = flip_model(0.0)
    assert cf.q_approx(m, (3, 0)) == (math.log(0.5), 0.5)
    assert cf.q_approx(m, (2, 1)) == (-math.inf, 0.0)


# -- invariants ---------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_reversible_shortcut_matches_general_formula(seed):
    m = random_reversible_model(3, np.random.default_rng(seed))
    for c in _configs(3, 9, 3):
        a = cf.rescaled(m, c)
        b = cf.rescaled(m, c, use_corollary=True)
        assert a == pytest.approx(b, rel=1e-12, abs=0)


def test_symmetric_path_is_equal():
    rng = np.random.default_rng(11)
    for _ in range(5):
        m = random_reversible_model(4, rng)
        for c in _configs(4, 8, 4):
            assert cf.rescaled(m, c, symmetric=True) == pytest.approx(cf.rescaled(m, c), rel=1e-12, abs=0)
    m = uniform_model(4)
    assert cf.rescaled(m, (2, 1, 3, 1), exact=True, symmetric=True) == cf.rescaled(m, (2, 1, 3, 1), exact=True)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_oracle_agreement_irreducible(seed, d):
    m = random_irreducible_model(4, np.random.default_rng(seed))
    table = RTable(m)
    for c in _configs(4, 8, d):
        lead = cf.q_leading(m, c)
        assert 0 <= lead.rescaled <= 1
        assert lead.value == pytest.approx(float(lambda_coeff(c)) * lead.rescaled, rel=1e-13, abs=0)
        assert lead.rescaled == pytest.approx(table(c), rel=1e-10, abs=0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracle_agreement_reversible_four(seed):
    m = random_reversible_model(4, np.random.default_rng(seed))
    table = RTable(m)
    for c in _configs(4, 8, 4):
        assert cf.rescaled(m, c) == pytest.approx(table(c), rel=1e-10, abs=0)


def test_exact_closed_form_equals_rational_oracle():
    m = uniform_model(4)
    table = RTable(m, "rational")
    for c in _configs(4, 7, 4):
        assert cf.rescaled(m, c, exact=True) == table(c)
    m = build_model(3, 0.01, [[0, F(1, 3), F(2, 3)], [F(1, 2), F(1, 4), F(1, 4)], [1, 0, 0]])
    table = RTable(m, "rational")
    for c in _configs(3, 8, 3):
        assert cf.rescaled(m, c, exact=True) == table(c)


def test_rows_match_scalar_path():
    m = primate_model()
    C = level_configs(4, 9)
    rows = cf.log_q_leading_rows(m, C)
    for c, v in zip(C[::5], rows[::5]):
        assert v == pytest.approx(cf.q_leading(m, c).log_value, rel=1e-13, abs=0)
    with pytest.raises(DomainError):
        cf.log_q_leading_rows(m, np.ones((2, 3), dtype=int))


def test_extreme_skews_keep_precision():
    rng = np.random.default_rng(3)
    m3 = random_irreducible_model(3, rng)
    for c in [(500, 1, 1), (1, 500, 1), (118, 1, 1), (40, 40, 40)]:
        exact = cf.rescaled(m3, c, exact=True)
        assert cf.rescaled(m3, c) == pytest.approx(float(exact), rel=1e-11, abs=0)
    m4 = random_reversible_model(4, rng)
    for c in [(117, 1, 1, 1), (30, 30, 30, 30), (1, 9, 10, 100)]:
        exact = cf.rescaled(m4, c, exact=True)
        assert cf.rescaled(m4, c) == pytest.approx(float(exact), rel=1e-11, abs=0)


# -- failures ---------------------------------------------------------------

def test_simple_formula_fails_on_shipped_fixture():
    m = load_model(MODELS / "reversible_nonpim.json")
    c = (1, 1, 1, 1)
    lead = cf.q_leading(m, c)
    assert abs(cf.q_simple(m, c) - lead.value) / lead.value > 1e-6
    assert lead.value == pytest.approx(q_leading_oracle(m, c).value, rel=1e-10, abs=0)
    assert cf.q_leading(m, c, exact=True).value == F(151, 480000)


def test_simple_formula_holds_for_three_reversible():
    m = random_reversible_model(3, np.random.default_rng(1))
    for c in _configs(3, 7, 3):
        assert cf.q_simple(m, c) == pytest.approx(cf.q_leading(m, c).value, rel=1e-12, abs=0)


def test_model_errors():
    rng = np.random.default_rng(0)
    m5 = random_irreducible_model(5, rng)
    with pytest.raises(UnsupportedError):
        cf.q_leading(m5, (1, 1, 1, 1, 1))
    cyc = build_model(4, 0.01, [[0, .9, .05, .05], [.05, 0, .9, .05], [.05, .05, 0, .9],
                                [.9, .05, .05, 0]])
    with pytest.raises(ModelError, match="detailed balance fails for alleles"):
        cf.q_leading(cyc, (1, 1, 1, 1))
    # three observed alleles need no reversibility
    assert cf.q_leading(cyc, (1, 1, 1, 0)).value > 0
    red = build_model(3, 0.01, [[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    with pytest.raises(ModelError, match="irreducible"):
        cf.q_leading(red, (1, 1, 0))
    with pytest.raises(DomainError):
        cf.q_leading(flip_model(), (1, 1, 1))
