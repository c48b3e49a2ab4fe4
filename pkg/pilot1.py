import numpy as np
from bayesdr import DgpSpec, EstimatorConfig, run_replications, true_apo_example1

spec = DgpSpec(example="one", seed=2024)
R, S = 40, 200
truth = [true_apo_example1(d) for d in (3, 4, 5)]
print("truth", np.round(truth, 3), flush=True)
for stab in (True, False):
    for method, resampler in [("cov", "dp"), ("wor", "dp"), ("cov", "bb"), ("wor", "bb")]:
        if method == "cov" and not stab:
            continue  # stabilize only matters for wor
        cfg = EstimatorConfig(method=method, resampler=resampler, n_draws=S,
                              family="gaussian_identity", stabilize=stab)
        rep = run_replications(spec, cfg, R, n_jobs=2)
        print(f"stab={stab} {method}-{resampler}: av_est={np.round(rep.av_est,3)} "
              f"bias={np.round(np.array(rep.av_est)-truth,3)} "
              f"av_var={np.round(rep.av_est_var,4)} cover={np.round(rep.coverage_pct,1)}",
              flush=True)
