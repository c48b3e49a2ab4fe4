# A desk-scale replication study: repeat generate -> posterior ->
# summarize and aggregate bias, average posterior variance and 95%
# credible-interval coverage. Mirrors the built-in `bayesdr simulate`
# command (which adds CSV outputs).

import numpy as np

from bayesdr import DgpSpec, EstimatorConfig, run_replications, true_apo_example1

spec = DgpSpec(example="one", n=100, K=10, seed=99)
R, S = 20, 200  # desk scale; the acceptance suite runs R=200, S=500

print(f"R={R} replicate panels, S={S} posterior draws each")
print("truth:", np.round([true_apo_example1(d) for d in (3, 4, 5)], 3))
header = f"{'combo':10s} {'av_est':>22s} {'av_est_var':>26s} {'coverage%':>18s}"
print(header)
for method in ("cov", "wor"):
    for resampler in ("bb", "dp"):
        cfg = EstimatorConfig(method=method, resampler=resampler, n_draws=S,
                              synthetic_outcomes="all")
        rep = run_replications(spec, cfg, R, n_jobs=2)
        print(f"{method}-{resampler:6s} {np.round(rep.av_est, 3)!s:>22s} "
              f"{np.round(rep.av_est_var, 4)!s:>26s} "
              f"{np.round(rep.coverage_pct, 1)!s:>18s}")
