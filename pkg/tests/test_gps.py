import numpy as np
import pytest
from scipy.integrate import quad

from bayesdr import (
    DgpSpec,
    GpsFit,
    MarginalDoseFit,
    PanelDataset,
    Trajectory,
    fit_gps_gee,
    fit_gps_random_intercept,
    fit_marginal_dose,
    generate_example1,
    gps_density,
    stabilized_weight,
)
from bayesdr.gps import DENSITY_FLOOR, SIGMA2_FLOOR, gps_density_rows, stabilized_weight_rows
from bayesdr.resample import RngStream


def panel_from_arrays(d, x, n_units, K, family="gaussian_identity"):
    trajs = []
    for i in range(n_units):
        sl = slice(i * K, (i + 1) * K)
        trajs.append(Trajectory(unit_id=f"u{i}", times=np.arange(1, K + 1),
                                outcomes=np.zeros(K), doses=d[sl], covariates=x[sl]))
    return PanelDataset(trajs, family, tuple(f"x{j+1}" for j in range(x.shape[1])))


def test_perfect_fit_hits_sigma2_floor(rng):
    x = rng.normal(size=(40, 2))
    d = 1.0 + 4.0 * x[:, 0] + 2.0 * x[:, 1]
    data = panel_from_arrays(d, x, n_units=10, K=4)
    fit = fit_gps_gee(data)
    np.testing.assert_allclose(fit.gamma, [1.0, 4.0, 2.0], atol=1e-8)
    assert fit.sigma2 == SIGMA2_FLOOR


def test_independent_dose_slopes_near_zero():
    g = np.random.default_rng(77)
    n = 10000
    x = g.normal(size=(n, 2))
    d = 3.0 + g.normal(size=n)
    data = panel_from_arrays(d, x, n_units=2500, K=4)
    fit = fit_gps_gee(data)
    # closed-form WLS slope standard error with sigma2 ~ 1
    for j in (1, 2):
        se = np.sqrt(fit.sigma2 / (n * x[:, j - 1].var()))
        assert abs(fit.gamma[j]) < 3 * se


def test_weight_rescaling_identical_gamma(rng):
    x = rng.normal(size=(30, 1))
    d = 0.5 + x[:, 0] + rng.normal(size=30)
    data = panel_from_arrays(d, x, n_units=10, K=3)
    w = rng.uniform(0.5, 1.5, size=30)
    f1 = fit_gps_gee(data, weights=w)
    f2 = fit_gps_gee(data, weights=2.0 * w)
    np.testing.assert_allclose(f1.gamma, f2.gamma, atol=1e-12)
    np.testing.assert_allclose(f1.sigma2, f2.sigma2, atol=1e-12)


def test_unit_reordering_invariance(rng):
    x = rng.normal(size=(30, 2))
    d = 1.0 + x @ [0.5, -0.2] + rng.normal(size=30)
    data = panel_from_arrays(d, x, n_units=10, K=3)
    perm = [7, 2, 9, 0, 4, 1, 8, 3, 6, 5]
    shuffled = PanelDataset(tuple(data.trajectories[i] for i in perm),
                            data.family, data.covariate_names)
    f1, f2 = fit_gps_gee(data), fit_gps_gee(shuffled)
    np.testing.assert_allclose(f1.gamma, f2.gamma, atol=1e-10)


def test_random_intercept_no_between_variation(rng):
    # noiseless linear dose: all unit mean residuals are exactly zero
    x = rng.normal(size=(40, 1))
    d = 2.0 + 3.0 * x[:, 0]
    data = panel_from_arrays(d, x, n_units=10, K=4)
    fit = fit_gps_random_intercept(data)
    assert fit.random_intercept.tau2 == 0.0
    assert all(v == 0.0 for v in fit.random_intercept.blup.values())


def test_random_intercept_negative_moment_clipped():
    # within-unit noise only: between-unit moment lands at/below zero
    g = np.random.default_rng(5)
    x = np.zeros((60, 0))
    d = g.normal(size=60)
    data = panel_from_arrays(d, x, n_units=6, K=10)
    fit = fit_gps_random_intercept(data)
    if fit.random_intercept.tau2 == 0.0:
        assert all(v == 0.0 for v in fit.random_intercept.blup.values())
    else:  # tiny positive estimate is possible; blups then shrink hard
        assert fit.random_intercept.tau2 < 0.05


def test_random_intercept_recovers_tau2():
    spec = DgpSpec(example="one", n=200, K=10, seed=31)
    data = generate_example1(spec, RngStream(spec.seed, 1).generator())
    fit = fit_gps_random_intercept(data)
    assert abs(fit.random_intercept.tau2 - 0.1) < 0.03  # within 30% of Var(U)
    assert abs(fit.sigma2 - 1.0) < 0.1


def test_random_intercept_single_unit_error(rng):
    x = rng.normal(size=(5, 1))
    data = panel_from_arrays(1.0 + x[:, 0], x, n_units=1, K=5)
    with pytest.raises(ValueError, match="unidentifiable|2 units"):
        fit_gps_random_intercept(data)


def test_density_peak_and_floor():
    fit = GpsFit(gamma=np.array([1.0, 2.0]), sigma2=1.0, random_intercept=None,
                 model_kind="gee")
    x = np.array([0.5])
    mean = 1.0 + 2.0 * 0.5
    assert abs(gps_density(fit, mean, x) - 0.3989422804014327) < 1e-10
    assert gps_density(fit, mean + 10.0, x) == DENSITY_FLOOR


def test_density_integrates_to_one():
    fit = GpsFit(gamma=np.array([0.7, -0.4]), sigma2=2.3, random_intercept=None,
                 model_kind="gee")
    x = np.array([1.2])
    mean = 0.7 - 0.4 * 1.2
    sd = np.sqrt(fit.sigma2)
    total, _ = quad(lambda d: gps_density(fit, d, x), mean - 8 * sd, mean + 8 * sd)
    assert abs(total - 1.0) < 1e-3


def test_density_unseen_unit_gets_no_intercept(rng):
    spec = DgpSpec(example="one", n=20, K=5, seed=9)
    data = generate_example1(spec, RngStream(9, 1).generator())
    fit = fit_gps_random_intercept(data)
    x = np.array([0.2, 1.0])
    known = list(fit.random_intercept.blup)[0]
    d0 = gps_density(fit, 4.0, x, unit=known)
    d_unseen = gps_density(fit, 4.0, x, unit="never-seen")
    d_none = gps_density(fit, 4.0, x, unit=None)
    assert d_unseen == d_none
    if fit.random_intercept.blup[known] != 0.0:
        assert d0 != d_none


def test_stabilized_weight_exact_one_when_fits_match():
    fit = GpsFit(gamma=np.array([2.0]), sigma2=1.7, random_intercept=None,
                 model_kind="gee")
    marg = MarginalDoseFit(mu=2.0, sigma2=1.7)
    for d in (2.0, 0.5, -3.0):
        assert stabilized_weight(fit, marg, d, np.zeros(0)) == 1.0


def test_stabilized_weight_at_floor():
    fit = GpsFit(gamma=np.array([0.0]), sigma2=0.01, random_intercept=None,
                 model_kind="gee")
    marg = MarginalDoseFit(mu=0.0, sigma2=100.0)
    d = 50.0  # conditional density floors, marginal does not
    w = stabilized_weight(fit, marg, d, np.zeros(0))
    num = np.exp(-d**2 / 200.0) / np.sqrt(2 * np.pi * 100.0)
    np.testing.assert_allclose(w, num * 1e12, rtol=1e-10)


def test_stabilized_weight_near_one_when_dose_independent():
    g = np.random.default_rng(123)
    n = 20000
    x = g.normal(size=(n, 2))
    d = 1.0 + g.normal(size=n)
    data = panel_from_arrays(d, x, n_units=5000, K=4)
    fit = fit_gps_gee(data)
    marg = fit_marginal_dose(d)
    w = stabilized_weight_rows(fit, marg, d, x)
    assert abs(w.mean() - 1.0) < 0.1
    assert abs(np.median(w) - 1.0) < 0.1


def test_weighted_correlation_shrinks_on_confounded_dgp():
    spec = DgpSpec(example="one", n=500, K=10, seed=21)
    data = generate_example1(spec, RngStream(21, 1).generator())
    arr = data.arrays()
    fit = fit_gps_gee(data)
    marg = fit_marginal_dose(arr.d)
    w = stabilized_weight_rows(fit, marg, arr.d, arr.x)

    def corr(a, b, weights=None):
        weights = np.ones_like(a) if weights is None else weights
        wm = lambda v: np.sum(weights * v) / weights.sum()
        ca, cb = a - wm(a), b - wm(b)
        return wm(ca * cb) / np.sqrt(wm(ca * ca) * wm(cb * cb))

    for j in range(2):
        assert abs(corr(arr.d, arr.x[:, j], w)) < abs(corr(arr.d, arr.x[:, j]))


def test_gps_density_rows_counterfactual_broadcast(rng):
    fit = GpsFit(gamma=np.array([0.0, 1.0]), sigma2=1.0, random_intercept=None,
                 model_kind="gee")
    x = rng.normal(size=(50, 1))
    dens = gps_density_rows(fit, 2.0, x)
    expect = np.maximum(np.exp(-(2.0 - x[:, 0])**2 / 2) / np.sqrt(2 * np.pi),
                        DENSITY_FLOOR)
    np.testing.assert_allclose(dens, expect, rtol=1e-12)
