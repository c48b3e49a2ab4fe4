import numpy as np
from bayesdr import DgpSpec, EstimatorConfig, run_replications, true_apo_example1

spec = DgpSpec(example="one", seed=2024, second_param="sd")
R, S = 60, 200
truth = np.array([true_apo_example1(d) for d in (3, 4, 5)])
for method, resampler in [("cov", "dp"), ("wor", "dp"), ("cov", "bb"), ("wor", "bb")]:
    cfg = EstimatorConfig(method=method, resampler=resampler, n_draws=S)
    rep = run_replications(spec, cfg, R, n_jobs=2)
    samp_var = rep.rep_means.var(axis=0, ddof=1)
    print(f"sd-reading {method}-{resampler}: bias={np.round(np.array(rep.av_est)-truth,3)} "
          f"av_postvar={np.round(rep.av_est_var,5)} samp_var={np.round(samp_var,5)} "
          f"cover={np.round(rep.coverage_pct,1)}", flush=True)
