import numpy as np
import pytest
from scipy.interpolate import BSpline

from bayesdr import DegenerateRangeError, build_basis, eval_basis


def test_quantile_knots_uniform(rng):
    values = rng.uniform(0.0, 1.0, size=20000)
    b = build_basis(values, n_interior=2)
    expected = np.quantile(values, [1 / 3, 2 / 3])
    np.testing.assert_allclose(b.interior_knots, expected, atol=1e-12)
    assert abs(b.interior_knots[0] - 1 / 3) < 0.02
    assert abs(b.interior_knots[1] - 2 / 3) < 0.02
    assert b.boundary_knots == (values.min(), values.max())


def test_basis_dim():
    b = build_basis(np.linspace(0, 1, 50), n_interior=0)
    assert b.basis_dim == 4
    assert build_basis(np.linspace(0, 1, 50), n_interior=3).basis_dim == 7


def test_constant_values_rejected():
    with pytest.raises(DegenerateRangeError):
        build_basis(np.full(10, 2.5), n_interior=2)


def test_boundary_evaluations():
    b = build_basis(np.linspace(0, 2, 101), n_interior=2)
    at_lo = eval_basis(b, 0.0)
    np.testing.assert_allclose(at_lo, [1, 0, 0, 0, 0, 0], atol=1e-14)
    at_hi = eval_basis(b, 2.0)
    np.testing.assert_allclose(at_hi, [0, 0, 0, 0, 0, 1], atol=1e-14)
    # clamping: outside the range equals the boundary
    np.testing.assert_array_equal(eval_basis(b, 2.7), at_hi)
    np.testing.assert_array_equal(eval_basis(b, -1.0), at_lo)


def test_partition_of_unity(rng):
    values = rng.normal(size=500) * 3.0
    b = build_basis(values, n_interior=2)
    lo, hi = b.boundary_knots
    x = rng.uniform(lo, hi, size=1000)
    m = b.design_matrix(x)
    assert np.all(np.abs(m.sum(axis=1) - 1.0) < 1e-10)
    assert np.all(m >= 0) and np.all(m <= 1 + 1e-12)


def test_local_support(rng):
    b = build_basis(rng.uniform(size=200), n_interior=4)
    x = rng.uniform(0, 1, size=500)
    m = b.design_matrix(x)
    assert int((m > 1e-14).sum(axis=1).max()) <= 4


def test_continuity(rng):
    b = build_basis(rng.uniform(size=200), n_interior=2)
    lo, hi = b.boundary_knots
    x = rng.uniform(lo, hi - 1e-7, size=200)
    diff = np.abs(b.design_matrix(x + 1e-8) - b.design_matrix(x)).max()
    assert diff < 1e-6


def test_matches_scipy_reference(rng):
    for _ in range(20):
        vals = rng.normal(size=300) * rng.uniform(0.5, 4.0)
        n_int = int(rng.integers(0, 5))
        b = build_basis(vals, n_int)
        lo, hi = b.boundary_knots
        t = np.concatenate([[lo] * 4, b.interior_knots, [hi] * 4])
        x = np.concatenate([rng.uniform(lo, hi, size=300), [lo, hi]])
        ref = BSpline.design_matrix(x, t, 3, extrapolate=False).toarray()
        np.testing.assert_allclose(b.design_matrix(x), ref, atol=1e-12)


def test_regression_columns_drop_first(rng):
    b = build_basis(rng.uniform(size=100), n_interior=2)
    x = rng.uniform(0, 1, size=50)
    np.testing.assert_array_equal(b.regression_columns(x), b.design_matrix(x)[:, 1:])


def test_empty_and_bad_args():
    with pytest.raises(ValueError):
        build_basis(np.array([]), 2)
    with pytest.raises(ValueError):
        build_basis(np.array([1.0, 2.0]), -1)
