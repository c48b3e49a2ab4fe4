"""Generalized propensity scores for a continuous treatment.

The treatment mean model is Gaussian: d | x ~ N(x'gamma (+ unit
intercept), sigma2), fitted either as a weighted GEE or as a random-
intercept model (pooled WLS fixed effects, between/within moment
decomposition for the variance components, shrinkage BLUPs). The GPS is
the fitted conditional density e(x) = f(d | x); stabilized weights
divide a marginal Gaussian dose density by it.

Density evaluations are floored at DENSITY_FLOOR so inverse-probability
weights stay finite for doses deep in the tails of a resampled fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gee import INDEPENDENT, GAUSSIAN_IDENTITY, WorkingCorrelation, fit_gee

__all__ = [
    "GpsFit",
    "RandomIntercept",
    "MarginalDoseFit",
    "fit_gps_gee",
    "fit_gps_random_intercept",
    "fit_marginal_dose",
    "gps_density",
    "gps_density_rows",
    "stabilized_weight",
    "stabilized_weight_rows",
]

DENSITY_FLOOR = 1e-12
SIGMA2_FLOOR = 1e-12


class RandomIntercept:
    """Between-unit variance and per-unit predicted intercepts.

    ``blup`` maps unit label -> predicted intercept. When the fit saw
    dense integer labels 0..m-1, lookups go through a vector table
    instead of the dict.
    """

    __slots__ = ("tau2", "_labels", "_values", "_dense", "_dict")

    def __init__(self, tau2: float, labels, values, dense: bool):
        self.tau2 = float(tau2)
        self._labels = labels
        self._values = np.asarray(values, dtype=float)
        self._dense = dense
        self._dict = None

    @property
    def blup(self) -> dict:
        if self._dict is None:
            self._dict = dict(
                zip((_as_key(l) for l in self._labels), self._values.tolist())
            )
        return self._dict

    def values_for(self, units) -> np.ndarray:
        """Vectorized BLUP lookup; unseen units get 0."""
        units = np.asarray(units)
        if self._dense and units.dtype.kind in "iu":
            out = np.zeros(len(units))
            ok = (units >= 0) & (units < len(self._values))
            out[ok] = self._values[units[ok]]
            return out
        return np.array([self.blup.get(u, 0.0) for u in units])

    def __repr__(self):
        return f"RandomIntercept(tau2={self.tau2!r}, n_units={len(self._values)})"


@dataclass(frozen=True)
class GpsFit:
    """Fitted treatment model: evaluates the GPS density e(x)."""

    gamma: np.ndarray
    sigma2: float
    random_intercept: RandomIntercept | None
    model_kind: str

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.model_kind not in ("gee", "random_intercept"):
            raise ValueError(f"unknown model_kind {self.model_kind!r}")

    def conditional_mean(self, x_rows, units=None) -> np.ndarray:
        x_rows = np.atleast_2d(np.asarray(x_rows, dtype=float))
        mean = self.gamma[0] + x_rows @ self.gamma[1:]
        if self.random_intercept is not None and units is not None:
            mean = mean + self.random_intercept.values_for(units)
        return mean


@dataclass(frozen=True)
class MarginalDoseFit:
    """Gaussian fit to the pooled dose distribution (stabilizer numerator)."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")


def _normal_pdf(d, mean, var):
    z = (np.asarray(d, dtype=float) - mean) ** 2 / (2.0 * var)
    dens = np.exp(-z) / math.sqrt(2.0 * math.pi * var)
    return np.maximum(dens, DENSITY_FLOOR)


def _design_with_intercept(x_rows):
    x_rows = np.asarray(x_rows, dtype=float)
    if x_rows.ndim == 1:
        x_rows = x_rows[:, None]
    return np.column_stack([np.ones(len(x_rows)), x_rows])


def _select_covariates(data, covariates):
    arr = data.arrays()
    if covariates is None:
        return arr, arr.x
    idx = [data.covariate_names.index(c) for c in covariates]
    return arr, arr.x[:, idx]


def fit_gps_gee_arrays(d, x_rows, units, weights=None,
                       corr: WorkingCorrelation = INDEPENDENT) -> GpsFit:
    """GEE treatment model from pooled arrays (hot path for resamples)."""
    d = np.asarray(d, dtype=float)
    if weights is None:
        weights = np.ones_like(d)
    if np.count_nonzero(np.asarray(weights) > 0) < 2:
        raise ValueError("need at least 2 positively weighted rows")
    X = _design_with_intercept(x_rows)
    fit = fit_gee(d, X, units, GAUSSIAN_IDENTITY, corr, weights)
    return GpsFit(gamma=fit.xi, sigma2=max(fit.dispersion, SIGMA2_FLOOR),
                  random_intercept=None, model_kind="gee")


def fit_gps_gee(data, covariates=None, weights=None,
                corr: WorkingCorrelation = INDEPENDENT) -> GpsFit:
    """Fit the GPS model d ~ x by weighted Gaussian-identity GEE.

    ``covariates`` selects covariate columns by name (default: all).
    sigma2 is the weighted mean squared residual.
    """
    arr, x_sel = _select_covariates(data, covariates)
    return fit_gps_gee_arrays(arr.d, x_sel, arr.row_unit, weights, corr)


def fit_gps_random_intercept_arrays(d, x_rows, units, weights=None) -> GpsFit:
    """Random-intercept treatment model from pooled arrays.

    Fixed effects by pooled WLS; tau2 and sigma2 by a weighted
    between/within moment decomposition (tau2 clipped at 0); BLUP for
    unit i is tau2/(tau2 + sigma2/K_i) times its weighted mean residual.
    """
    d = np.asarray(d, dtype=float)
    units = np.asarray(units)
    if weights is None:
        weights = np.ones_like(d)
    w = np.asarray(weights, dtype=float)

    dense = (units.dtype.kind in "iu" and len(units)
             and np.all(units[1:] >= units[:-1]) and units[0] == 0
             and 1 + np.count_nonzero(np.diff(units)) == units[-1] + 1)
    if dense:
        codes = np.asarray(units, dtype=np.intp)
        labels = np.arange(codes[-1] + 1)
    else:
        labels, codes = np.unique(units, return_inverse=True)
    if len(labels) < 2:
        raise ValueError("tau2 unidentifiable: need at least 2 units")

    X = _design_with_intercept(x_rows)
    fit = fit_gee(d, X, units, GAUSSIAN_IDENTITY, INDEPENDENT, w)
    gamma = fit.xi
    resid = d - X @ gamma

    m = len(labels)
    W = np.bincount(codes, weights=w, minlength=m)
    keep = W > 0
    sum_wr = np.bincount(codes, weights=w * resid, minlength=m)
    sum_w2 = np.bincount(codes, weights=w * w, minlength=m)
    rbar = np.zeros(m)
    rbar[keep] = sum_wr[keep] / W[keep]
    k_rows = np.bincount(codes, minlength=m)

    # within: weighted residual SS around unit means, Bessel-style df
    ssw = np.bincount(codes, weights=w * (resid - rbar[codes]) ** 2, minlength=m).sum()
    df_within = np.sum(W[keep] - sum_w2[keep] / W[keep])
    if df_within > 0:
        sigma2 = ssw / df_within
    else:
        sigma2 = float(np.sum(w * resid**2) / np.sum(w))  # all singleton units

    # between: weighted variance of unit means, less its within-noise share
    W_tot = W[keep].sum()
    gmean = np.sum(W[keep] * rbar[keep]) / W_tot
    denom_b = W_tot - np.sum(W[keep] ** 2) / W_tot
    if denom_b > 0:
        v_between = np.sum(W[keep] * (rbar[keep] - gmean) ** 2) / denom_b
        noise_share = np.sum(sum_w2[keep] / W[keep]) / W_tot
        tau2 = max(v_between - sigma2 * noise_share, 0.0)
    else:
        tau2 = 0.0
    sigma2 = max(float(sigma2), SIGMA2_FLOOR)
    if tau2 < 1e-10 * sigma2:
        tau2 = 0.0  # numerical dust from a (near-)perfect fixed-effect fit

    if tau2 > 0:
        shrink = tau2 / (tau2 + sigma2 / np.maximum(k_rows, 1))
        blup_vals = shrink * rbar
    else:
        blup_vals = np.zeros(m)
    ri = RandomIntercept(tau2=float(tau2), labels=labels, values=blup_vals, dense=dense)
    return GpsFit(gamma=gamma, sigma2=sigma2, random_intercept=ri,
                  model_kind="random_intercept")


def _as_key(label):
    if isinstance(label, np.integer):
        return int(label)
    if isinstance(label, np.str_):
        return str(label)
    return label


def fit_gps_random_intercept(data, covariates=None, weights=None) -> GpsFit:
    """Random-intercept GPS model on a dataset (see the arrays variant)."""
    arr, x_sel = _select_covariates(data, covariates)
    return fit_gps_random_intercept_arrays(arr.d, x_sel, arr.row_unit, weights)


def gps_density_rows(fit: GpsFit, d, x_rows, units=None) -> np.ndarray:
    """GPS density of each dose given its covariate row (vectorized).

    ``d`` may be a scalar (broadcast: counterfactual dose) or a vector.
    Unknown units contribute no random intercept.
    """
    mean = fit.conditional_mean(x_rows, units)
    return _normal_pdf(d, mean, fit.sigma2)


def gps_density(fit: GpsFit, d: float, x, unit=None) -> float:
    """GPS density e(x) at one (dose, covariate) point, floored > 0."""
    units = None if unit is None else np.array([unit])
    return float(gps_density_rows(fit, float(d), np.atleast_2d(x), units)[0])


def fit_marginal_dose(doses, weights=None) -> MarginalDoseFit:
    """Gaussian fit (weighted mean and variance) to the pooled doses."""
    d = np.asarray(doses, dtype=float)
    if weights is None:
        weights = np.ones_like(d)
    w = np.asarray(weights, dtype=float)
    mu = float(np.sum(w * d) / np.sum(w))
    var = float(np.sum(w * (d - mu) ** 2) / np.sum(w))
    return MarginalDoseFit(mu=mu, sigma2=max(var, SIGMA2_FLOOR))


def stabilized_weight_rows(fit: GpsFit, marg: MarginalDoseFit | None, d,
                           x_rows, units=None) -> np.ndarray:
    """Marginal-over-conditional density ratio per row.

    With ``marg=None`` the numerator is 1 (raw inverse-GPS weights).
    """
    den = gps_density_rows(fit, d, x_rows, units)
    if marg is None:
        return 1.0 / den
    num = _normal_pdf(d, marg.mu, marg.sigma2)
    return num / den


def stabilized_weight(fit: GpsFit, marg: MarginalDoseFit | None, d: float,
                      x, unit=None) -> float:
    """Stabilized inverse-probability weight at one point."""
    units = None if unit is None else np.array([unit])
    return float(stabilized_weight_rows(fit, marg, float(d), np.atleast_2d(x), units)[0])
