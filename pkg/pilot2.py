import numpy as np
from bayesdr import DgpSpec, EstimatorConfig, run_replications, true_apo_example1

spec = DgpSpec(example="one", seed=2024)
R, S = 60, 200
truth = np.array([true_apo_example1(d) for d in (3, 4, 5)])

def report(tag, cfg):
    rep = run_replications(spec, cfg, R, n_jobs=2)
    samp_var = rep.rep_means.var(axis=0, ddof=1)
    print(f"{tag}: bias={np.round(np.array(rep.av_est)-truth,3)} "
          f"av_postvar={np.round(rep.av_est_var,4)} samp_var={np.round(samp_var,4)} "
          f"cover={np.round(rep.coverage_pct,1)}", flush=True)

for knots in (2, 3, 4):
    report(f"cov-bb k={knots} gee", EstimatorConfig(
        method="cov", resampler="bb", n_draws=S, spline_interior_knots=knots))
report("cov-bb k=2 ri", EstimatorConfig(
    method="cov", resampler="bb", n_draws=S, gps_kind="random_intercept"))
report("cov-bb k=3 ri", EstimatorConfig(
    method="cov", resampler="bb", n_draws=S, gps_kind="random_intercept",
    spline_interior_knots=3))
report("cov-dp k=3", EstimatorConfig(
    method="cov", resampler="dp", n_draws=S, spline_interior_knots=3))
report("wor-bb k=3 ri", EstimatorConfig(
    method="wor", resampler="bb", n_draws=S, gps_kind="random_intercept",
    spline_interior_knots=3))
report("wor-dp k=3", EstimatorConfig(
    method="wor", resampler="dp", n_draws=S, spline_interior_knots=3))
