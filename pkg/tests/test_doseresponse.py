import numpy as np
import pytest

from bayesdr import (
    EstimatorConfig,
    GeeFit,
    INDEPENDENT,
    GAUSSIAN_IDENTITY,
    POISSON_LOG,
    PanelDataset,
    PosteriorError,
    SingularDesignError,
    Trajectory,
    apo_at,
    build_basis,
    draw_bb,
    fit_cov,
    fit_wor,
    posterior_apo,
    summarize,
)
from bayesdr.doseresponse import ApoPosterior, DoseResponseFit, _wor_design
from bayesdr.gee import WorkingCorrelation
from bayesdr.resample import RngStream
import bayesdr.doseresponse as dr
import bayesdr.resample as rs
from conftest import make_panel


def equal_weights(n, rng):
    return np.full(n, 1.0 / n)


def unconfounded_panel(n=300, K=4, seed=5, slope=1.5):
    g = np.random.default_rng(seed)
    trajs = []
    for i in range(n):
        x = g.normal(size=(K, 2))
        d = 2.0 + g.normal(size=K)          # dose independent of x
        y = 0.5 + slope * d + 0.3 * x[:, 0] + 0.1 * g.normal(size=K)
        trajs.append(Trajectory(f"u{i}", np.arange(1, K + 1), y, d, x))
    return PanelDataset(trajs, "gaussian_identity", ("x1", "x2"))


def test_config_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(method="nope")
    with pytest.raises(ValueError):
        EstimatorConfig(dose_grid=())
    with pytest.raises(ValueError):
        EstimatorConfig(dose_grid=(3.0, 2.0))
    with pytest.raises(ValueError):
        EstimatorConfig(resampler="dp", alpha=0.0)
    cfg = EstimatorConfig()
    assert cfg.resolved_gps_kind == "random_intercept"
    assert EstimatorConfig(resampler="bb").resolved_gps_kind == "gee"
    assert EstimatorConfig(gps_kind="gee").resolved_gps_kind == "gee"


def test_fit_cov_recovers_clean_dose_slope():
    data = unconfounded_panel(n=1250, K=4)
    draw = draw_bb(data, RngStream(0, 1).generator())
    draw.weights = np.full(draw.n_atoms, 1.0 / draw.n_atoms)
    draw._row_weights = None
    cfg = EstimatorConfig(method="cov", resampler="bb", gps_kind="gee")
    fit = fit_cov(draw, cfg)
    assert abs(fit.outcome_fit.xi[1] - 1.5) < 0.02  # MC error at n=5000 rows


def test_fit_cov_equal_weights_match_unweighted(monkeypatch, small_panel):
    data = make_panel(n=30, K=4, seed=3)
    monkeypatch.setattr(rs, "dirichlet_flat_weights", equal_weights)
    draw = draw_bb(data, RngStream(0, 1).generator())
    np.testing.assert_allclose(draw.weights, 1.0 / 30)
    cfg = EstimatorConfig(method="cov", resampler="bb")
    fit_w = fit_cov(draw, cfg)

    draw2 = draw_bb(data, RngStream(0, 2).generator())
    draw2.weights = np.ones(30)
    draw2._row_weights = None
    fit_u = fit_cov(draw2, cfg)
    np.testing.assert_allclose(fit_w.outcome_fit.xi, fit_u.outcome_fit.xi, atol=1e-9)


def test_fit_cov_too_few_rows_is_singular():
    data = make_panel(n=7, K=1, seed=2)  # basis_dim+1 = 7 rows < required 8
    draw = draw_bb(data, RngStream(0, 1).generator())
    cfg = EstimatorConfig(method="cov", resampler="bb")
    with pytest.raises(SingularDesignError):
        fit_cov(draw, cfg)


def test_apo_wor_intercept_only():
    basis = build_basis(np.linspace(0, 10, 50), 2)
    xi = np.zeros(1 + basis.basis_dim - 1)
    xi[0] = 4.2
    ofit = GeeFit(xi, GAUSSIAN_IDENTITY, INDEPENDENT, 1.0, True, 1, 0.0)
    gps_fit = dr._fit_gps(
        draw_bb(make_panel(n=3, K=2), RngStream(0, 1).generator()), "gee",
        None, INDEPENDENT)
    fit = DoseResponseFit(ofit, gps_fit, basis, "wor")
    for d in (0.0, 3.3, 10.0, 25.0):
        assert apo_at(fit, d, draw=None) == pytest.approx(4.2, abs=1e-12)


def test_apo_wor_poisson_zero_coefficients():
    basis = build_basis(np.linspace(0, 10, 50), 2)
    xi = np.zeros(1 + basis.basis_dim - 1)
    ofit = GeeFit(xi, POISSON_LOG, INDEPENDENT, 1.0, True, 1, 0.0)
    gps_fit = dr._fit_gps(
        draw_bb(make_panel(n=3, K=2), RngStream(0, 1).generator()), "gee",
        None, INDEPENDENT)
    fit = DoseResponseFit(ofit, gps_fit, basis, "wor")
    assert apo_at(fit, 5.0, draw=None) == pytest.approx(1.0, abs=1e-12)


def test_wor_design_has_explicit_intercept():
    basis = build_basis(np.linspace(0, 1, 20), 2)
    row = _wor_design(np.array([0.5]), basis)
    assert row[0, 0] == 1.0
    assert row.shape[1] == 1 + basis.basis_dim - 1


def test_posterior_single_draw_reproducible(small_panel):
    cfg = EstimatorConfig(method="cov", resampler="bb", n_draws=1, seed=123,
                          dose_grid=(1.0, 2.0))
    a = posterior_apo(small_panel, cfg)
    b = posterior_apo(small_panel, cfg)
    assert a.samples.shape == (1, 2)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_posterior_parallel_equals_serial():
    data = make_panel(n=25, K=4, seed=8)
    cfg = EstimatorConfig(method="cov", resampler="dp", n_draws=16, seed=3,
                          j_target=60, dose_grid=(1.0, 2.0, 3.0))
    serial = posterior_apo(data, cfg, n_jobs=1)
    parallel = posterior_apo(data, cfg, n_jobs=2)
    np.testing.assert_array_equal(serial.samples, parallel.samples)


def test_posterior_family_mismatch(small_panel):
    cfg = EstimatorConfig(family="poisson_log")
    with pytest.raises(ValueError, match="family"):
        posterior_apo(small_panel, cfg)


def test_posterior_grid_order_preserved(small_panel):
    cfg = EstimatorConfig(method="wor", resampler="bb", n_draws=6, seed=1,
                          dose_grid=(0.5, 1.5, 2.5))
    apo = posterior_apo(small_panel, cfg)
    assert apo.dose_grid == (0.5, 1.5, 2.5)
    assert apo.samples.shape == (6, 3)


def test_posterior_bb_equal_weights_collapses(monkeypatch):
    data = make_panel(n=20, K=3, seed=4)
    monkeypatch.setattr(rs, "dirichlet_flat_weights", equal_weights)
    cfg = EstimatorConfig(method="cov", resampler="bb", n_draws=5, seed=9,
                          dose_grid=(1.0, 2.0))
    apo = posterior_apo(data, cfg)
    for s in range(1, 5):
        np.testing.assert_array_equal(apo.samples[s], apo.samples[0])


def test_wor_affine_equivariance_bb():
    data = make_panel(n=40, K=3, seed=12)
    a, b = 2.5, -7.0
    mapped = PanelDataset(
        tuple(Trajectory(t.unit_id, t.times, a * t.outcomes + b, t.doses, t.covariates)
              for t in data.trajectories),
        data.family, data.covariate_names)
    cfg = EstimatorConfig(method="wor", resampler="bb", n_draws=8, seed=77,
                          dose_grid=(1.0, 2.0, 3.0))
    apo0 = posterior_apo(data, cfg)
    apo1 = posterior_apo(mapped, cfg)
    np.testing.assert_allclose(apo1.samples, a * apo0.samples + b, atol=1e-8)


def test_failed_draws_recorded_and_capped(monkeypatch):
    data = make_panel(n=20, K=3, seed=4)
    real = dr.fit_cov
    calls = {"n": 0}

    def flaky(draw, cfg, gps_fit=None, _prep=None):
        calls["n"] += 1
        if calls["n"] == 2:
            raise SingularDesignError("forced")
        return real(draw, cfg, gps_fit=gps_fit, _prep=_prep)

    monkeypatch.setattr(dr, "fit_cov", flaky)
    cfg = EstimatorConfig(method="cov", resampler="bb", n_draws=30, seed=2,
                          dose_grid=(1.0, 2.0))
    apo = posterior_apo(data, cfg)
    assert len(apo.failures) == 1
    assert apo.samples.shape[0] + len(apo.failures) == 30
    assert apo.failures[0][0] == 2

    def broken(draw, cfg, gps_fit=None, _prep=None):
        raise SingularDesignError("forced")

    monkeypatch.setattr(dr, "fit_cov", broken)
    with pytest.raises(PosteriorError):
        posterior_apo(data, cfg)


def test_summarize_examples():
    apo = ApoPosterior(samples=np.array([[1.0], [2.0], [3.0]]), dose_grid=(4.0,),
                       method="cov", resampler="bb")
    s = summarize(apo)
    assert s["mean"][0] == 2.0
    assert s["var"][0] == 1.0
    assert s["median"][0] == 2.0

    const = ApoPosterior(samples=np.full((10, 2), 5.5), dose_grid=(1.0, 2.0),
                         method="cov", resampler="bb")
    sc = summarize(const)
    assert np.all(sc["var"] == 0.0)
    assert np.all(sc["q975"] - sc["q025"] == 0.0)

    g = np.random.default_rng(1)
    z = ApoPosterior(samples=g.standard_normal((10000, 1)), dose_grid=(0.0,),
                     method="cov", resampler="bb")
    sz = summarize(z)
    assert abs(sz["q025"][0] + 1.96) < 0.06
    assert abs(sz["q975"][0] - 1.96) < 0.06
    assert sz["q025"][0] <= sz["median"][0] <= sz["q975"][0]


def test_summarize_needs_two_draws():
    apo = ApoPosterior(samples=np.ones((1, 1)), dose_grid=(1.0,),
                       method="cov", resampler="bb")
    with pytest.raises(ValueError):
        summarize(apo)


def test_wor_cov_agree_without_confounding():
    data = unconfounded_panel(n=120, K=4, seed=17)
    grid = (1.0, 2.0, 3.0)
    res = {}
    for method in ("cov", "wor"):
        cfg = EstimatorConfig(method=method, resampler="bb", n_draws=80, seed=10,
                              dose_grid=grid, gps_kind="gee")
        res[method] = summarize(posterior_apo(data, cfg))
    gap = np.abs(res["cov"]["mean"] - res["wor"]["mean"])
    sd = np.sqrt(res["cov"]["var"] + res["wor"]["var"])
    assert np.all(gap <= 2.0 * sd)


def test_wor_unstabilized_extreme_weight_finite():
    data = make_panel(n=10, K=4, seed=6)
    # push one observed dose far into the tail of its conditional density
    t0 = data.trajectories[0]
    doses = t0.doses.copy()
    doses[0] = 60.0
    trajs = (Trajectory(t0.unit_id, t0.times, t0.outcomes, doses, t0.covariates),
             *data.trajectories[1:])
    data = PanelDataset(trajs, data.family, data.covariate_names)
    draw = draw_bb(data, RngStream(0, 1).generator())
    cfg = EstimatorConfig(method="wor", resampler="bb", stabilize=False,
                          gps_kind="gee")
    fit = fit_wor(draw, cfg)
    assert np.all(np.isfinite(fit.outcome_fit.xi))


def test_wor_constant_dose_degenerate():
    g = np.random.default_rng(0)
    trajs = [Trajectory(f"u{i}", [1, 2], g.normal(size=2), np.full(2, 3.0),
                        g.normal(size=(2, 1))) for i in range(10)]
    data = PanelDataset(trajs, "gaussian_identity", ("x1",))
    draw = draw_bb(data, RngStream(0, 1).generator())
    cfg = EstimatorConfig(method="wor", resampler="bb", gps_kind="gee")
    with pytest.raises(Exception) as exc_info:
        fit_wor(draw, cfg)
    assert "degenerate" in str(exc_info.value).lower() or "sigma2" in str(exc_info.value)


def test_dp_synthetic_outcomes_regenerated_poisson():
    data = make_panel(n=30, K=4, seed=15, family="poisson_log")
    cfg = EstimatorConfig(method="cov", resampler="dp", family="poisson_log",
                          n_draws=4, seed=3, j_target=80, alpha=8.0,
                          dose_grid=(1.0, 2.0))
    apo = posterior_apo(data, cfg)
    assert apo.samples.shape == (4, 2)
    assert np.all(apo.samples > 0)  # Poisson means are positive


def test_dp_mixture_only_changes_base_rows():
    from bayesdr.doseresponse import SyntheticOutcomeGenerator
    from bayesdr.resample import draw_dp

    data = make_panel(n=30, K=4, seed=15)
    gen = SyntheticOutcomeGenerator(family="gaussian_identity", gps_kind="gee",
                                    mode="mixture")
    rng = RngStream(4, 9).generator()
    draw = draw_dp(data, 10.0, 60, gen, rng)
    arr = data.arrays()
    src_rows = arr.rows_for_units(draw.atom_units)
    starts = np.concatenate([[0], np.cumsum(draw.atom_lengths)])
    for j in range(draw.n_atoms):
        sl = slice(starts[j], starts[j + 1])
        unchanged = np.array_equal(draw.y[sl], arr.y[src_rows[sl]])
        assert unchanged == (not draw.origins[j])
