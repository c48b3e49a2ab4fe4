"""Cubic B-spline bases with data-driven knots.

Knots: boundary at the sample min/max, interior at equally spaced
empirical quantiles. Evaluation outside the boundary is clamped to the
nearest boundary rather than extrapolated, since resampled inputs can
land slightly outside the training range and cubic extrapolation blows
up there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SplineBasis", "DegenerateRangeError", "build_basis", "eval_basis"]

DEGREE = 3


def _deboor_design(x: np.ndarray, knots: np.ndarray, p: int) -> np.ndarray:
    """Dense B-spline design matrix by the de Boor recursion.

    ``knots`` carries (p+1)-fold boundary knots; x must already be
    clamped into [knots[p], knots[-p-1]]. Rows are processed one knot
    span at a time, so the knot values entering the recursion are
    scalars and all denominators are known positive (strictly
    increasing interior knots).
    """
    n = len(x)
    m = len(knots) - p - 1  # number of basis functions
    span = np.searchsorted(knots, x, side="right") - 1
    np.clip(span, p, m - 1, out=span)

    out = np.zeros((n, m))
    nmat = np.empty((n, p + 1))
    for i in range(p, m):
        mask = span == i
        if not mask.any():
            continue
        xs = x[mask]
        nmat_i = nmat[: len(xs)]
        nmat_i[:, 0] = 1.0
        for j in range(1, p + 1):
            saved = 0.0
            for r in range(j):
                right = knots[i + r + 1] - xs
                left = xs - knots[i + 1 - j + r]
                temp = nmat_i[:, r] / (knots[i + r + 1] - knots[i + 1 - j + r])
                nmat_i[:, r] = saved + right * temp
                saved = left * temp
            nmat_i[:, j] = saved
        out[mask, i - p:i + 1] = nmat_i
    return out


class DegenerateRangeError(ValueError):
    """All values identical: no spline support can be built."""


@dataclass(frozen=True)
class SplineBasis:
    """A cubic B-spline basis on [lo, hi] with clamped boundary knots.

    basis_dim = n_interior + degree + 1. Evaluations form a partition of
    unity: entries in [0, 1] summing to 1, at most degree+1 nonzero.
    """

    interior_knots: np.ndarray
    boundary_knots: tuple[float, float]
    degree: int = DEGREE

    def __post_init__(self):
        lo, hi = self.boundary_knots
        interior = np.asarray(self.interior_knots, dtype=float)
        if not lo < hi:
            raise DegenerateRangeError(f"boundary knots not increasing: ({lo}, {hi})")
        if interior.size:
            if np.any(np.diff(interior) <= 0):
                raise ValueError("interior knots must be strictly increasing")
            if interior[0] <= lo or interior[-1] >= hi:
                raise ValueError("interior knots must lie strictly inside the boundary")
        interior.setflags(write=False)
        object.__setattr__(self, "interior_knots", interior)
        full = np.concatenate([[lo] * (self.degree + 1), interior, [hi] * (self.degree + 1)])
        full.setflags(write=False)
        object.__setattr__(self, "_knots", full)

    @property
    def basis_dim(self) -> int:
        return len(self.interior_knots) + self.degree + 1

    def design_matrix(self, x: np.ndarray) -> np.ndarray:
        """Dense (len(x), basis_dim) matrix of basis values, clamping x."""
        lo, hi = self.boundary_knots
        xc = np.clip(np.asarray(x, dtype=float), lo, hi)
        return _deboor_design(xc, self._knots, self.degree)

    def regression_columns(self, x: np.ndarray) -> np.ndarray:
        """Basis columns for use next to an explicit intercept.

        Drops the first basis function: the full basis sums to one, so
        keeping all columns alongside an intercept would be singular.
        """
        return self.design_matrix(x)[:, 1:]


def build_basis(values, n_interior: int = 2) -> SplineBasis:
    """Cubic basis spanning the observed range of ``values``.

    Interior knots sit at the equally spaced empirical quantiles
    1/(n_interior+1), ..., n_interior/(n_interior+1); e.g. n_interior=2
    puts them at the 33.3% and 66.7% quantiles.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("values is empty")
    if n_interior < 0:
        raise ValueError("n_interior must be >= 0")
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        raise DegenerateRangeError(f"all values identical ({lo}); spline range degenerate")
    if n_interior:
        probs = np.arange(1, n_interior + 1) / (n_interior + 1)
        interior = np.quantile(values, probs)
        # quantiles can collide with the boundary on short or tied samples;
        # pull them strictly inside to keep the knot sequence valid
        eps = 1e-9 * (hi - lo)
        interior = np.clip(interior, lo + eps, hi - eps)
        if np.any(np.diff(interior) <= 0):
            raise ValueError("tied quantiles: interior knots not strictly increasing")
    else:
        interior = np.empty(0)
    return SplineBasis(interior_knots=interior, boundary_knots=(lo, hi))


def eval_basis(basis: SplineBasis, x: float) -> np.ndarray:
    """Basis vector at one point (clamped to the boundary outside it)."""
    return basis.design_matrix(np.array([float(x)]))[0]
