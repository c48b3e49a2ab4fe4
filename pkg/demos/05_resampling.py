# The posterior resampling layer: flat Dirichlet weights (Bayesian
# bootstrap), truncated stick-breaking, and Dirichlet-process draws
# mixing observed trajectories with base-measure atoms.

import numpy as np

from bayesdr import (
    DgpSpec,
    RngStream,
    dirichlet_flat_weights,
    draw_bb,
    draw_dp,
    generate_example1,
    stick_breaking,
)

rng = RngStream(seed=7, stream=0).generator()

w = dirichlet_flat_weights(10, rng)
print("flat Dirichlet weights over 10 units:", np.round(w, 3), "sum", w.sum())

# stick-breaking with concentration alpha_n = alpha + n decays fast:
# E[p_j] = (1/(1+a)) (a/(1+a))^(j-1)
for alpha_n, j in ((105.0, 500), (13.0, 200)):
    sw = stick_breaking(alpha_n, epsilon=1e-12, j_max=j, rng=rng)
    analytic = (1 / (1 + alpha_n)) * (alpha_n / (1 + alpha_n)) ** (j - 1)
    print(f"alpha_n={alpha_n:5.0f}: p_{j} = {sw.weights[-1]:.2e} "
          f"(E[p_{j}] = {analytic:.2e}), kept {sw.truncated_at} sticks")

spec = DgpSpec(example="one", n=100, K=10, seed=3)
data = generate_example1(spec, RngStream(3, 1).generator())

bb = draw_bb(data, RngStream(9, 1).generator())
print(f"\nBB draw: {bb.n_atoms} atoms (the observed units), "
      f"max weight {bb.weights.max():.4f}")

alpha, j_target = 5.0, 500
dp = draw_dp(data, alpha, j_target, None, RngStream(9, 2).generator())
frac = dp.origins.mean()
print(f"DP draw: {dp.n_atoms} whole-trajectory atoms, "
      f"{dp.origins.sum()} from the base measure "
      f"({100 * frac:.1f}%; expected {100 * alpha / (alpha + 100):.1f}%)")
print("first 8 stick weights:", np.round(dp.weights[:8], 4))

# same (seed, stream) -> bit-identical draw
dp2 = draw_dp(data, alpha, j_target, None, RngStream(9, 2).generator())
print("deterministic redraw:", np.array_equal(dp.weights, dp2.weights)
      and np.array_equal(dp.atom_units, dp2.atom_units))
