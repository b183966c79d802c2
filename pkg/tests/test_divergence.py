import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special, stats

from dynbn import divergence as dv
from dynbn.divergence import (GammaDensity, GridSpec, LogNormalDensity, NormalDensity,
                              TabulatedDensity, hellinger_mvn, hellinger_normal_normal,
                              quadrature_hellinger, variation_quadrature)
from dynbn.errors import AccuracyWarning, DomainError
from dynbn.oracle import hellinger_2d_quadrature

means = st.floats(-5, 5)
variances = st.floats(0.1, 5)


# -- normal / normal ------------------------------------------------------------

def test_identical_normals():
    assert hellinger_normal_normal(1.3, 2.0, 1.3, 2.0) == 0.0


def test_variance_only_example():
    assert hellinger_normal_normal(0, 1, 0, 4) == pytest.approx(math.sqrt(1 - math.sqrt(0.8)), abs=1e-15)
    assert hellinger_normal_normal(0, 1, 0, 4) == pytest.approx(0.32492, abs=1e-5)
    assert quadrature_hellinger(NormalDensity(0, 1), NormalDensity(0, 4)) == pytest.approx(0.32492, abs=1e-5)


def test_far_apart_normals():
    d = hellinger_normal_normal(0, 1, 10, 1)
    assert d >= 0.99999
    assert d == pytest.approx(math.sqrt(1 - math.exp(-12.5)), abs=1e-15)


def test_nonpositive_variance():
    with pytest.raises(DomainError):
        hellinger_normal_normal(0, 0, 0, 1)


@given(means, variances, means, variances, means, variances)
def test_metric_axioms(m1, v1, m2, v2, m3, v3):
    d12 = hellinger_normal_normal(m1, v1, m2, v2)
    assert 0 <= d12 <= 1
    assert abs(d12 - hellinger_normal_normal(m2, v2, m1, v1)) <= 1e-12
    d13 = hellinger_normal_normal(m1, v1, m3, v3)
    d23 = hellinger_normal_normal(m2, v2, m3, v3)
    assert d13 <= d12 + d23 + 1e-9


@given(means, variances, means, variances)
def test_closed_form_vs_quadrature_and_sandwich(m1, v1, m2, v2):
    f, h = NormalDensity(m1, v1), NormalDensity(m2, v2)
    d = hellinger_normal_normal(m1, v1, m2, v2)
    assert quadrature_hellinger(f, h) == pytest.approx(d, abs=1e-6)
    v = variation_quadrature(f, h)
    assert d * d - 1e-9 <= v <= math.sqrt(2) * d + 1e-9


# -- multivariate ---------------------------------------------------------------

def test_mvn_identical():
    S = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert hellinger_mvn([1, 2], S, [1, 2], S) == 0.0


def test_mvn_independent_product():
    shift = math.sqrt(-8 * math.log(0.9))  # equal unit variances: I = exp(-shift^2 / 8)
    assert 1 - hellinger_normal_normal(0, 1, shift, 1) ** 2 == pytest.approx(0.9)
    d = hellinger_mvn([0, 0], np.eye(2), [shift, shift], np.eye(2))
    assert 1 - d * d == pytest.approx(0.81, abs=1e-12)
    assert 1 - hellinger_2d_quadrature([0, 0], np.eye(2), [shift, shift], np.eye(2)) ** 2 \
        == pytest.approx(0.81, abs=1e-8)


def test_mvn_reduces_to_scalar():
    assert hellinger_mvn([0.5], [[2.0]], [-1.0], [[0.7]]) == pytest.approx(
        hellinger_normal_normal(0.5, 2.0, -1.0, 0.7), abs=1e-14)


@pytest.mark.parametrize("S", [np.array([[1.0, 2.0], [2.0, 1.0]]), np.array([[1.0, 0.5], [0.2, 1.0]])])
def test_mvn_rejects_bad_covariance(S):
    with pytest.raises(DomainError):
        hellinger_mvn([0, 0], S, [0, 0], np.eye(2))


def test_mvn_vs_2d_quadrature():
    rng = np.random.default_rng(0)
    for _ in range(10):
        m1, m2 = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
        mats = []
        for _ in range(2):
            a = rng.normal(size=(2, 2))
            mats.append(a @ a.T + 0.5 * np.eye(2))
        assert hellinger_mvn(m1, mats[0], m2, mats[1]) == pytest.approx(
            hellinger_2d_quadrature(m1, mats[0], m2, mats[1]), abs=1e-5)


# -- normal / gamma -------------------------------------------------------------

def test_normal_gamma_monotone_in_alpha():
    d25 = dv.hellinger_normal_gamma(25, 25).quadrature
    d400 = dv.hellinger_normal_gamma(400, 400).quadrature
    assert 0 < d400 < d25


def test_normal_gamma_rejects_nonpositive_mean():
    with pytest.raises(DomainError):
        dv.hellinger_normal_gamma(0, 1)


@pytest.mark.parametrize("alpha", [0.5, 1, 5, 25, 100, 400, 2000])
def test_derived_closed_form_matches_quadrature(alpha):
    mu = 3.0
    s2 = mu * mu / alpha
    quad = dv.hellinger_normal_gamma(mu, s2).quadrature
    assert dv.hellinger_normal_gamma_exact(mu, s2) == pytest.approx(quad, abs=1e-6)


@pytest.mark.parametrize("alpha", [1, 5, 25, 100, 400])
def test_literal_closed_form_is_reported_not_trusted(alpha):
    res = dv.hellinger_normal_gamma(alpha, alpha)
    literal = dv.normal_gamma_i2_literal(alpha)
    assert literal > 1  # not a valid affinity
    assert math.isnan(res.formula)
    assert math.isfinite(res.quadrature)


def test_literal_form_no_overflow():
    assert dv.normal_gamma_i2_literal(1e6) == math.inf
    assert math.isfinite(dv.normal_gamma_i2(1e6))


# -- variation bounds -----------------------------------------------------------

@pytest.mark.parametrize("d, expected", [(0, (0, 0)), (0.1, (0.01, 0.1414213562373095)), (1, (1, 1))])
def test_variation_bounds(d, expected):
    assert dv.variation_bounds(d) == pytest.approx(expected, abs=1e-15)


def test_variation_bounds_range():
    with pytest.raises(DomainError):
        dv.variation_bounds(1.5)


# -- quadrature -----------------------------------------------------------------

def test_quadrature_same_tabulated_density():
    x = np.linspace(-3, 3, 301)
    f = TabulatedDensity(x, np.exp(-x ** 2 / 2))
    assert quadrature_hellinger(f, f) == pytest.approx(0, abs=1e-10)
    assert variation_quadrature(f, f) == pytest.approx(0, abs=1e-10)


def test_quadrature_disjoint_supports():
    x = np.linspace(-5, 5, 201)
    f = TabulatedDensity(x, stats.norm.pdf(x))
    h = TabulatedDensity(x + 200, stats.norm.pdf(x))
    assert quadrature_hellinger(f, h) == pytest.approx(1, abs=1e-6)
    assert quadrature_hellinger(NormalDensity(0, 1), NormalDensity(200, 1)) == pytest.approx(1, abs=1e-6)


def test_variation_far_normals():
    assert variation_quadrature(NormalDensity(0, 1), NormalDensity(10, 1)) >= 0.999


@given(means, means, variances)
def test_variation_equal_variance_closed_form(m1, m2, v):
    expected = 2 * stats.norm.cdf(abs(m1 - m2) / (2 * math.sqrt(v))) - 1
    assert variation_quadrature(NormalDensity(m1, v), NormalDensity(m2, v)) == pytest.approx(expected, abs=1e-7)


@given(means, variances, means, variances)
def test_lognormal_pair_invariant_under_log(a1, b1, a2, b2):
    quad = quadrature_hellinger(LogNormalDensity(a1 / 3, b1 / 4), LogNormalDensity(a2 / 3, b2 / 4))
    assert quad == pytest.approx(hellinger_normal_normal(a1 / 3, b1 / 4, a2 / 3, b2 / 4), abs=1e-6)


@given(st.floats(0.5, 60), st.floats(0.2, 5), st.floats(0.5, 60), st.floats(0.2, 5))
def test_gamma_pair_closed_form(a1, r1, a2, r2):
    log_bc = (special.gammaln((a1 + a2) / 2) - 0.5 * (special.gammaln(a1) + special.gammaln(a2))
              + 0.5 * a1 * math.log(r1) + 0.5 * a2 * math.log(r2)
              - 0.5 * (a1 + a2) * math.log((r1 + r2) / 2))
    expected = math.sqrt(max(-math.expm1(log_bc), 0))
    assert quadrature_hellinger(GammaDensity(a1, r1), GammaDensity(a2, r2)) == pytest.approx(expected, abs=1e-6)


def test_unconverged_refinement_warns():
    tight = GridSpec(start=8, cap=16, tol=1e-15)
    with pytest.warns(AccuracyWarning):
        quadrature_hellinger(NormalDensity(0, 1), GammaDensity(1.5, 1.0), tight)


def test_default_grid_does_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error", AccuracyWarning)
        quadrature_hellinger(NormalDensity(5, 5), GammaDensity(5, 1))


# -- marginalization ------------------------------------------------------------

def test_shared_conditional_equality():
    pair = dv.shared_conditional_pair(0.0, 1.0, 1.0, 2.0, 0.7, 0.3, 0.5)
    rep = dv.marginalization_checks([(*pair, True)])
    row = rep.rows[0]
    assert abs(row.d_joint - row.d_margin) < 1e-6 and rep.all_ok
    assert row.d_margin == pytest.approx(hellinger_normal_normal(0.0, 1.0, 1.0, 2.0), abs=1e-14)


def test_identical_joints():
    S = np.array([[1.0, 0.2], [0.2, 1.0]])
    row = dv.marginalization_checks([([0, 0], S, [0, 0], S, False)]).rows[0]
    assert row.d_joint == 0 and row.d_margin == 0 and row.ok


def test_random_pairs_never_increase_under_marginalization():
    rng = np.random.default_rng(3)
    pairs = []
    for _ in range(100):
        mats = []
        for _ in range(2):
            a = rng.normal(size=(2, 2))
            mats.append(a @ a.T + 0.2 * np.eye(2))
        pairs.append((rng.normal(size=2), mats[0], rng.normal(size=2), mats[1], False))
    rep = dv.marginalization_checks(pairs)
    assert rep.all_ok
    for row, (m1, s1, m2, s2, _) in zip(rep.rows, pairs):
        assert row.d_margin == pytest.approx(hellinger_normal_normal(m1[0], s1[0, 0], m2[0], s2[0, 0]), abs=1e-12)


# -- error bound ----------------------------------------------------------------

def test_error_bound_normal_variant_is_exact():
    rep = dv.error_bound(1.0, 2.0, 3.0, family="normal", V=0.5)
    assert rep.applicable
    assert rep.eps1 == 0 and rep.eps2 == pytest.approx(0, abs=1e-12)
    assert rep.bound == pytest.approx(0, abs=1e-6)


@pytest.mark.parametrize("v", [20, 25, 50])
def test_error_bound_large_counts(v):
    rep = dv.error_bound(v, v, v)
    assert rep.applicable
    assert rep.quadrature_dH < 0.05
    assert rep.quadrature_dH <= rep.bound <= 1
    assert 0 <= rep.eps1 <= 1 and rep.eps2 > 0
    assert rep.tau_alt > 0 and rep.tau > 0
    lo, hi = dv.variation_bounds(rep.quadrature_dH)
    assert lo <= hi


@pytest.mark.parametrize("y", [0, 1])
def test_error_bound_small_counts_not_applicable(y):
    rep = dv.error_bound(1, 1, y)
    assert not rep.applicable and rep.bound == 1.0
    assert rep.quadrature_dH > dv.error_bound(25, 25, 25).quadrature_dH


def test_error_bound_l2_components():
    rep = dv.error_bound(25, 25, 25)
    # c2 is the L2 norm of the Gamma(y+1, 1) likelihood
    expected = math.exp(0.5 * (special.gammaln(2 * 26 - 1) - 2 * special.gammaln(26)
                               - (2 * 26 - 1) * math.log(2)))
    assert rep.c2 == pytest.approx(expected, rel=1e-8)
    assert rep.c0 == pytest.approx((2 * math.sqrt(math.pi * 25)) ** -0.5, rel=1e-14)
