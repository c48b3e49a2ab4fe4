import numpy as np
from bayesdr import (DgpSpec, EstimatorConfig, run_replications,
                     true_apo_example1, true_apo_example2)

spec = DgpSpec(example="one", seed=2024)
truth1 = np.array([true_apo_example1(d) for d in (3, 4, 5)])

def report(tag, spec, cfg, R, truth):
    rep = run_replications(spec, cfg, R, n_jobs=2)
    samp_var = rep.rep_means.var(axis=0, ddof=1)
    print(f"{tag}: bias={np.round(np.array(rep.av_est)-truth,3)} "
          f"av_postvar={np.round(rep.av_est_var,4)} samp_var={np.round(samp_var,4)} "
          f"cover={np.round(rep.coverage_pct,1)}", flush=True)

report("ex1 cov-dp ALL", spec,
       EstimatorConfig(method="cov", resampler="dp", n_draws=200,
                       synthetic_outcomes="all"), 60, truth1)
report("ex1 wor-dp ALL", spec,
       EstimatorConfig(method="wor", resampler="dp", n_draws=200,
                       synthetic_outcomes="all"), 60, truth1)
report("ex1 cov-bb R120", spec,
       EstimatorConfig(method="cov", resampler="bb", n_draws=200), 120, truth1)

spec2 = DgpSpec(example="two", seed=2024)
truth2 = np.array([true_apo_example2(d, n_draws=2_000_000) for d in (3, 4, 5)])
print("ex2 oracle truths:", np.round(truth2, 4), flush=True)
report("ex2 cov-dp ALL", spec2,
       EstimatorConfig(method="cov", resampler="dp", n_draws=200,
                       family="poisson_log", synthetic_outcomes="all"), 40, truth2)
report("ex2 wor-dp ALL", spec2,
       EstimatorConfig(method="wor", resampler="dp", n_draws=200,
                       family="poisson_log", synthetic_outcomes="all"), 40, truth2)
