# Cubic B-spline bases with quantile knots: the building block both
# estimators use for flexible dose and GPS adjustment.

import numpy as np

from bayesdr import build_basis, eval_basis

rng = np.random.default_rng(0)
values = rng.gamma(2.0, 1.5, size=2000)

basis = build_basis(values, n_interior=2)
print(f"boundary knots: ({basis.boundary_knots[0]:.3f}, {basis.boundary_knots[1]:.3f})")
print(f"interior knots (33.3%/66.7% quantiles): {np.round(basis.interior_knots, 3)}")
print(f"basis dimension: {basis.basis_dim}")

# partition of unity: the basis functions sum to one everywhere inside
x = np.linspace(values.min(), values.max(), 9)
m = basis.design_matrix(x)
print("\n      x   basis values                                   sum")
for xi, row in zip(x, m):
    print(f"{xi:7.3f}   {np.round(row, 3)}   {row.sum():.12f}")

# out-of-range evaluation clamps to the boundary instead of extrapolating
print("\neval at hi + 5:", np.round(eval_basis(basis, values.max() + 5.0), 3))
print("eval at hi    :", np.round(eval_basis(basis, values.max()), 3))
