from fractions import Fraction
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stabcvtmle import dgp, tmle
from stabcvtmle.data import TrialDataset
from stabcvtmle.errors import PositivityError, SingularFitError
from stabcvtmle.validation import aipw

from conftest import make_random


def _solve_fraction(a, b):
    """Gauss-Jordan elimination in exact rational arithmetic."""
    m = [row[:] + [rhs] for row, rhs in zip(a, b)]
    size = len(m)
    for col in range(size):
        piv = next(r for r in range(col, size) if m[r][col] != 0)
        m[col], m[piv] = m[piv], m[col]
        m[col] = [v / m[col][col] for v in m[col]]
        for r in range(size):
            if r != col and m[r][col] != 0:
                f = m[r][col]
                m[r] = [x - f * y for x, y in zip(m[r], m[col])]
    return [row[-1] for row in m]


# dataset validation ---------------------------------------------------------


def test_dataset_rejects_single_arm():
    with pytest.raises(ValueError):
        TrialDataset(np.ones((4, 1)), [1, 1, 1, 0], np.ones((4, 2)))


def test_dataset_rejects_missing_values():
    y = np.ones((6, 2))
    y[0, 0] = np.nan
    with pytest.raises(ValueError):
        TrialDataset(np.ones((6, 1)), [0, 0, 0, 1, 1, 1], y)


def test_dataset_rejects_bad_propensity():
    with pytest.raises(PositivityError):
        TrialDataset(np.ones((6, 1)), [0, 0, 0, 1, 1, 1], np.ones((6, 2)), propensity=1.0)


def test_dataset_needs_two_endpoints():
    with pytest.raises(ValueError):
        TrialDataset(np.ones((6, 1)), [0, 0, 0, 1, 1, 1], np.ones((6, 1)))


# outcome regression ------------------------------------------------------------


def test_constant_outcome_gives_intercept_only(toy_data):
    data = toy_data.with_outcomes(np.full((6, 2), 3.5))
    coef = tmle.fit_outcome_regression(data, 0).coefficients
    np.testing.assert_allclose(coef, [3.5, 0.0, 0.0], atol=1e-12)


def test_toy_fit_matches_exact_normal_equations(toy_data):
    x = [[Fraction(1), Fraction(int(w)), Fraction(int(a))] for w, a in zip(toy_data.covariates[:, 0], toy_data.arm)]
    for k in range(2):
        y = [Fraction(v).limit_denominator() for v in toy_data.outcomes[:, k]]
        xtx = [[sum(r[i] * r[j] for r in x) for j in range(3)] for i in range(3)]
        xty = [sum(r[i] * yi for r, yi in zip(x, y)) for i in range(3)]
        exact = [float(v) for v in _solve_fraction(xtx, xty)]
        np.testing.assert_allclose(tmle.fit_outcome_regression(toy_data, k).coefficients, exact, atol=1e-12)


def test_noiseless_study1_recovers_coefficients():
    cfg = dgp.Study1Config(n=50, beta_a=(1.0, 0.0), noise_sd=0.0)
    data = dgp.gen_study1(cfg, np.random.default_rng(3)).dataset
    coef = tmle.fit_outcome_regression(data, 0).coefficients
    np.testing.assert_allclose(coef, [1.0, -0.1, 0.6, 1.0], atol=1e-10)


def test_singular_design_names_endpoint():
    w = np.column_stack([np.arange(6.0), 2 * np.arange(6.0)])
    data = TrialDataset(w, [0, 1, 0, 1, 0, 1], np.random.default_rng(0).normal(size=(6, 2)))
    with pytest.raises(SingularFitError) as err:
        tmle.fit_outcome_regression(data, 1)
    assert err.value.endpoint == 1


# clever covariate --------------------------------------------------------------


@pytest.mark.parametrize("a,g1,expected", [(1, 0.5, 2.0), (0, 0.5, -2.0), (0, 0.25, -1 / 0.75), (1, 0.25, 4.0)])
def test_clever_covariate_values(a, g1, expected):
    assert tmle.clever_covariate(a, g1) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("g1", [0.0, 1.0, -0.1, 1.5])
def test_clever_covariate_positivity(g1):
    with pytest.raises(PositivityError):
        tmle.clever_covariate(1, g1)


# targeted estimates ----------------------------------------------------------------


def test_constant_outcome_gives_zero_estimate(toy_data):
    psi, ic = tmle.tmle_ate(toy_data.with_outcomes(np.full((6, 2), -2.0)), 0)
    assert psi == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(ic, 0.0, atol=1e-12)


@pytest.mark.parametrize("seed", range(25))
def test_tmle_equals_aipw(seed):
    rng = np.random.default_rng(seed)
    data = make_random(seed, g1=float(rng.uniform(0.25, 0.75)))
    for k in range(data.n_endpoints):
        assert tmle.tmle_ate(data, k)[0] == pytest.approx(aipw(data, k), abs=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_score_equation_solved(seed):
    est = tmle.estimate_all_endpoints(make_random(100 + seed, g1=0.4))
    assert (np.abs(est.ic.mean(axis=0)) <= 1e-8 * est.ic.std(axis=0)).all()


def test_large_sample_study1_estimate_near_truth():
    data = dgp.gen_study1(dgp.Study1Config.scenario("S2", n=50_000), np.random.default_rng(20)).dataset
    psi, ic = tmle.tmle_ate(data, 0)
    se = ic.std() / math.sqrt(data.n)
    assert abs(psi - 1.0) <= 3 * se


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_label_swap_antisymmetry(seed):
    data = make_random(seed)
    swapped = TrialDataset(data.covariates, 1 - data.arm, -data.outcomes, 1 - data.propensity)
    for k in range(data.n_endpoints):
        assert tmle.tmle_ate(swapped, k)[0] == pytest.approx(tmle.tmle_ate(data, k)[0], abs=1e-10)


# covariance machinery ---------------------------------------------------------------


def test_duplicated_endpoint_perfect_correlation(toy_data):
    y = np.column_stack([toy_data.outcomes[:, 0]] * 2)
    est = tmle.estimate_all_endpoints(toy_data.with_outcomes(y))
    assert est.psi[0] == est.psi[1]
    assert est.rho[0, 1] / math.sqrt(est.rho[0, 0] * est.rho[1, 1]) == pytest.approx(1.0, abs=1e-12)


def test_independent_noise_endpoints_nearly_uncorrelated():
    rng = np.random.default_rng(8)
    n = 20_000
    data = TrialDataset(rng.normal(size=(n, 1)), rng.integers(0, 2, n), rng.normal(size=(n, 2)))
    rho = tmle.estimate_all_endpoints(data).rho
    assert abs(rho[0, 1] / math.sqrt(rho[0, 0] * rho[1, 1])) <= 3 / math.sqrt(n)


def test_rho_is_direct_covariance():
    data = dgp.gen_study1(dgp.Study1Config.scenario("S3"), np.random.default_rng(4)).dataset
    est = tmle.estimate_all_endpoints(data)
    c = est.ic - est.ic.mean(axis=0)
    assert np.array_equal(est.rho, c.T @ c / data.n)
    np.testing.assert_array_equal(est.rho, est.rho.T)
    assert np.linalg.eigvalsh(est.rho).min() >= -1e-10


def test_composite_ic_vertex_and_midpoint():
    est = tmle.estimate_all_endpoints(make_random(5))
    np.testing.assert_array_equal(tmle.composite_ic([0, 1, 0], est), est.ic[:, 1])
    est2 = tmle.estimate_all_endpoints(make_random(6, k=2))
    np.testing.assert_allclose(tmle.composite_ic([0.5, 0.5], est2), (est2.ic[:, 0] + est2.ic[:, 1]) / 2, atol=1e-15)


def test_composite_ic_dimension_mismatch():
    est = tmle.estimate_all_endpoints(make_random(7))
    with pytest.raises(ValueError):
        tmle.composite_ic([0.5, 0.5], est)


def test_composite_variance_identity():
    rng = np.random.default_rng(9)
    est = tmle.estimate_all_endpoints(make_random(9))
    for _ in range(100):
        alpha = rng.dirichlet(np.ones(3))
        comp = tmle.composite_ic(alpha, est)
        assert np.mean((comp - comp.mean()) ** 2) == pytest.approx(alpha @ est.rho @ alpha, abs=1e-10)


def test_small_sample_factor():
    assert tmle.small_sample_factor(50, 4) == pytest.approx(50 / 46)
    assert tmle.small_sample_factor(50, 0) == 1.0
    with pytest.raises(ValueError):
        tmle.small_sample_factor(4, 4)
