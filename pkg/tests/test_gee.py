import math

import numpy as np
import pytest

from bayesdr import (
    GAUSSIAN_IDENTITY,
    INDEPENDENT,
    POISSON_LOG,
    DivergenceError,
    GeeFit,
    SingularDesignError,
    WorkingCorrelation,
    estimating_equation,
    fit_gee,
    predict_mean,
)
from oracles import poisson_quasi_newton, wls_closed_form


def rand_instance(rng, n=20, p=3, poisson=False):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    units = np.repeat(np.arange(-(-n // 4)), 4)[:n]
    w = rng.uniform(0.2, 2.0, size=n)
    if poisson:
        beta = rng.normal(scale=0.3, size=p)
        beta[0] += 1.0
        y = rng.poisson(np.exp(X @ beta)).astype(float)
    else:
        y = X @ rng.normal(size=p) + rng.normal(size=n)
    return y, X, units, w


def test_intercept_only_weighted_mean():
    y = np.array([1.0, 2.0, 3.0])
    X = np.ones((3, 1))
    fit = fit_gee(y, X, units=np.array([0, 1, 2]), family=GAUSSIAN_IDENTITY)
    np.testing.assert_allclose(fit.xi, [2.0], atol=1e-12)
    assert fit.converged


def test_gaussian_matches_wls_oracle(rng):
    for _ in range(20):
        y, X, units, w = rand_instance(rng)
        fit = fit_gee(y, X, units, GAUSSIAN_IDENTITY, INDEPENDENT, w)
        np.testing.assert_allclose(fit.xi, wls_closed_form(y, X, w), atol=1e-8)


def test_poisson_matches_newton_oracle(rng):
    for _ in range(10):
        y, X, units, w = rand_instance(rng, n=10, p=3, poisson=True)
        fit = fit_gee(y, X, units, POISSON_LOG, INDEPENDENT, w)
        np.testing.assert_allclose(fit.xi, poisson_quasi_newton(y, X, w), atol=1e-6)
        assert fit.converged and fit.ee_norm < 1e-8


def test_predict_mean_examples():
    gfit = GeeFit(np.array([2.0]), GAUSSIAN_IDENTITY, INDEPENDENT, 1.0, True, 1, 0.0)
    assert predict_mean(gfit, np.array([1.0])) == 2.0
    pfit = GeeFit(np.array([0.0]), POISSON_LOG, INDEPENDENT, 1.0, True, 1, 0.0)
    assert predict_mean(pfit, np.array([1.0])) == 1.0
    pfit2 = GeeFit(np.array([1.0, 0.2]), POISSON_LOG, INDEPENDENT, 1.0, True, 1, 0.0)
    got = predict_mean(pfit2, np.array([1.0, 3.0]))
    np.testing.assert_allclose(got, math.exp(1.6), rtol=1e-12)
    assert round(got, 3) == 4.953


def test_score_zero_at_solution(rng):
    y, X, units, w = rand_instance(rng, poisson=True)
    fit = fit_gee(y, X, units, POISSON_LOG, INDEPENDENT, w)
    score = estimating_equation(fit.xi, y, X, units, POISSON_LOG, INDEPENDENT, w)
    assert np.max(np.abs(score)) < 1e-8


def test_score_intercept_model_exact_zero():
    y = np.array([1.0, 4.0, 7.0])
    X = np.ones((3, 1))
    score = estimating_equation(np.array([y.mean()]), y, X, np.arange(3),
                                GAUSSIAN_IDENTITY)
    np.testing.assert_allclose(score, [0.0], atol=1e-12)


def test_score_linear_in_weights(rng):
    y, X, units, w = rand_instance(rng)
    xi = rng.normal(size=X.shape[1])
    s1 = estimating_equation(xi, y, X, units, GAUSSIAN_IDENTITY, INDEPENDENT, w)
    s2 = estimating_equation(xi, y, X, units, GAUSSIAN_IDENTITY, INDEPENDENT, 2 * w)
    np.testing.assert_allclose(s2, 2 * s1, rtol=1e-12)


@pytest.mark.parametrize("family", [GAUSSIAN_IDENTITY, POISSON_LOG])
def test_weight_scale_invariance(rng, family):
    y, X, units, w = rand_instance(rng, poisson=family.tag == "poisson_log")
    f1 = fit_gee(y, X, units, family, INDEPENDENT, w)
    f2 = fit_gee(y, X, units, family, INDEPENDENT, 37.5 * w)
    np.testing.assert_allclose(f1.xi, f2.xi, atol=1e-10)


@pytest.mark.parametrize("corr", [INDEPENDENT, WorkingCorrelation("exchangeable", 0.3)])
def test_zero_weight_rows_inert(rng, corr):
    y, X, units, w = rand_instance(rng, n=24, p=3)
    w = w.copy()
    w[[1, 7, 13]] = 0.0
    keep = w > 0
    f_all = fit_gee(y, X, units, GAUSSIAN_IDENTITY, corr, w)
    f_kept = fit_gee(y[keep], X[keep], units[keep], GAUSSIAN_IDENTITY, corr, w[keep])
    np.testing.assert_allclose(f_all.xi, f_kept.xi, atol=1e-10)


def test_exchangeable_rho_zero_equals_independent(rng):
    y, X, units, w = rand_instance(rng)
    f_ind = fit_gee(y, X, units, GAUSSIAN_IDENTITY, INDEPENDENT, w)
    f_exc = fit_gee(y, X, units, GAUSSIAN_IDENTITY,
                    WorkingCorrelation("exchangeable", 0.0), w)
    np.testing.assert_allclose(f_ind.xi, f_exc.xi, atol=1e-10)


def test_exchangeable_estimated_rho(rng):
    # strongly correlated within-unit noise: estimated rho should be high
    n_units, K = 60, 6
    units = np.repeat(np.arange(n_units), K)
    shared = np.repeat(rng.normal(size=n_units), K)
    y = 1.0 + shared + 0.3 * rng.normal(size=n_units * K)
    X = np.ones((n_units * K, 1))
    fit = fit_gee(y, X, units, GAUSSIAN_IDENTITY, WorkingCorrelation("exchangeable"))
    assert 0.7 < fit.corr.rho < 1.0
    assert fit.converged


def test_rank_deficient_design(rng):
    y = rng.normal(size=10)
    x = rng.normal(size=10)
    X = np.column_stack([np.ones(10), x, 2 * x])  # exact collinearity
    with pytest.raises(SingularDesignError):
        fit_gee(y, X, np.arange(10), GAUSSIAN_IDENTITY)


def test_poisson_divergence_guard():
    y = np.array([math.exp(35.0), 1.0, 2.0, 1.0])
    X = np.ones((4, 1))
    with pytest.raises(DivergenceError):
        fit_gee(y, X, np.arange(4), POISSON_LOG)


def test_weight_validation(rng):
    y, X, units, w = rand_instance(rng)
    with pytest.raises(ValueError):
        fit_gee(y, X, units, GAUSSIAN_IDENTITY, INDEPENDENT, -w)
    with pytest.raises(ValueError):
        fit_gee(y, X, units, GAUSSIAN_IDENTITY, INDEPENDENT, np.zeros_like(w))


def test_unsorted_string_units_grouping(rng):
    # unit labels arriving interleaved must group correctly for exchangeable
    y, X, _, w = rand_instance(rng, n=24, p=2)
    units = np.array([f"u{i % 4}" for i in range(24)])
    fit = fit_gee(y, X, units, GAUSSIAN_IDENTITY, WorkingCorrelation("exchangeable", 0.2), w)
    order = np.argsort(units, kind="stable")
    fit2 = fit_gee(y[order], X[order], units[order], GAUSSIAN_IDENTITY,
                   WorkingCorrelation("exchangeable", 0.2), w[order])
    np.testing.assert_allclose(fit.xi, fit2.xi, atol=1e-12)


def test_fixed_rho_out_of_range():
    y = np.arange(6.0)
    X = np.ones((6, 1))
    units = np.repeat([0, 1], 3)
    with pytest.raises(ValueError, match="rho"):
        fit_gee(y, X, units, GAUSSIAN_IDENTITY, WorkingCorrelation("exchangeable", -0.9))
