"""Weighted generalized estimating equations for marginal mean models.

Solves, by Fisher scoring / IRLS, the weighted estimating equation

    sum_i D_i' Sigma_i^{-1} W_i (y_i - mu_i(xi)) = 0

over units i, where mu = g^{-1}(X xi), D = d mu / d xi, W_i is the
diagonal of per-row observation weights and Sigma_i = phi * A_i^{1/2}
R(rho) A_i^{1/2} is the working covariance (independent or
exchangeable R). Weights are probability weights: they enter the
estimating function linearly, so the solution is invariant to positive
rescaling of all weights, and rows with weight exactly zero are dropped
from both the score and the working-covariance blocks (which makes them
exactly inert under any working correlation).

Families: Gaussian with identity link (V(mu)=1) and Poisson with log
link (V(mu)=mu). Uncertainty comes from the resampling layer, so no
sandwich variance is computed here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

__all__ = [
    "LinkFamily",
    "GAUSSIAN_IDENTITY",
    "POISSON_LOG",
    "family_from_tag",
    "WorkingCorrelation",
    "INDEPENDENT",
    "GeeFit",
    "SingularDesignError",
    "DivergenceError",
    "fit_gee",
    "predict_mean",
    "estimating_equation",
]

ETA_MAX = 30.0  # |linear predictor| guard for the log link (exp overflow)
EE_TOL = 1e-8
_PHI_FLOOR = 1e-12


class SingularDesignError(ValueError):
    """Design matrix is rank deficient on the positively weighted rows."""


class DivergenceError(RuntimeError):
    """IRLS left the numerically safe region (|eta| > ETA_MAX)."""


@dataclass(frozen=True)
class LinkFamily:
    """Marginal mean family: link inverse g^{-1} and variance function V."""

    tag: str

    def __post_init__(self):
        if self.tag not in ("gaussian_identity", "poisson_log"):
            raise ValueError(f"unknown family {self.tag!r}")

    def mean(self, eta):
        return np.exp(eta) if self.tag == "poisson_log" else np.asarray(eta, dtype=float)

    def dmu_deta(self, eta, mu):
        return mu if self.tag == "poisson_log" else np.ones_like(np.asarray(eta, dtype=float))

    def variance(self, mu):
        return mu if self.tag == "poisson_log" else np.ones_like(np.asarray(mu, dtype=float))


GAUSSIAN_IDENTITY = LinkFamily("gaussian_identity")
POISSON_LOG = LinkFamily("poisson_log")


def family_from_tag(tag) -> LinkFamily:
    if isinstance(tag, LinkFamily):
        return tag
    return LinkFamily(tag)


@dataclass(frozen=True)
class WorkingCorrelation:
    """Within-unit working correlation: independent or exchangeable.

    For exchangeable, ``rho=None`` means estimate it by a weighted
    moment estimator on each IRLS sweep; a numeric rho is held fixed.
    Valid range: -1/(K_max - 1) < rho < 1.
    """

    tag: str = "independent"
    rho: float | None = None

    def __post_init__(self):
        if self.tag not in ("independent", "exchangeable"):
            raise ValueError(f"unknown working correlation {self.tag!r}")
        if self.tag == "independent" and self.rho is not None:
            raise ValueError("rho is only meaningful for exchangeable correlation")


INDEPENDENT = WorkingCorrelation("independent")


@dataclass(frozen=True)
class GeeFit:
    """Solution of a weighted GEE."""

    xi: np.ndarray
    family: LinkFamily
    corr: WorkingCorrelation
    dispersion: float
    converged: bool
    iterations: int
    ee_norm: float

    @property
    def n_params(self) -> int:
        return len(self.xi)


class _Problem:
    """Validated, zero-weight-free view of one GEE problem."""

    def __init__(self, y, X, units, weights):
        y = np.asarray(y, dtype=float)
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be 2-d")
        w = np.asarray(weights, dtype=float)
        units = np.asarray(units)
        n = len(y)
        if not (X.shape[0] == n == len(w) == len(units)):
            raise ValueError("y, X, units and weights must have equal length")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise ValueError("non-finite values in design or response")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and >= 0")
        if not np.any(w > 0):
            raise ValueError("at least one weight must be positive")

        if np.all(w > 0):
            yk, Xk, wk, uk = y, X, w, units
        else:
            keep = w > 0
            yk, Xk, wk, uk = y[keep], X[keep], w[keep], units[keep]
        if uk.dtype.kind in "iu" and (len(uk) < 2 or np.all(uk[1:] >= uk[:-1])):
            codes = np.asarray(uk, dtype=np.intp)  # already grouped and ordered
            self.y, self.X, self.w = yk, Xk, wk
        else:
            codes = np.unique(uk, return_inverse=True)[1]
            order = np.argsort(codes, kind="stable")
            codes = codes[order]
            self.y, self.X, self.w = yk[order], Xk[order], wk[order]
        self.codes = codes
        # group boundaries over rows sorted by unit
        change = np.nonzero(np.diff(self.codes))[0] + 1
        self.bounds = np.concatenate([[0], change, [len(self.codes)]]).astype(np.intp)
        self.group_sizes = np.diff(self.bounds)
        self.k_max = int(self.group_sizes.max())
        self.p = X.shape[1]

    def sorted_view(self):
        return self.y, self.X, self.w


def _segment_sums(values, bounds):
    """Per-group sums of rows (works for 1-d and 2-d values)."""
    return np.add.reduceat(values, bounds[:-1], axis=0)


def _check_rho(rho, k_max):
    lo = -1.0 / (k_max - 1) if k_max > 1 else -1.0
    if not (lo < rho < 1.0):
        raise ValueError(f"rho={rho} outside valid range ({lo:.4g}, 1) for K_max={k_max}")


def _moment_rho(resid_p, w, bounds, phi, k_max):
    """Weighted exchangeable moment estimator from Pearson residuals."""
    wr = w * resid_p
    sum_wr = _segment_sums(wr, bounds)
    sum_w2r2 = _segment_sums(wr * wr, bounds)
    sum_w = _segment_sums(w, bounds)
    sum_w2 = _segment_sums(w * w, bounds)
    num = 0.5 * np.sum(sum_wr**2 - sum_w2r2)
    den = 0.5 * np.sum(sum_w**2 - sum_w2)
    if den <= 0 or phi <= 0:
        return 0.0
    rho = num / (den * phi)
    lo = -1.0 / (k_max - 1) + 1e-6 if k_max > 1 else -0.999999
    return float(np.clip(rho, lo, 1.0 - 1e-6))


def _dispersion(resid_p, w):
    return float(np.sum(w * resid_p**2) / np.sum(w))


def _score_and_info(prob, family, xi, rho):
    """Weighted estimating function and its Fisher-scoring matrix.

    Uses the closed form R^{-1} = a I + b J for the exchangeable block
    so no per-unit matrices are ever formed.
    """
    y, X, w = prob.sorted_view()
    eta = X @ xi
    if family.tag == "poisson_log":
        if np.any(np.abs(eta) > ETA_MAX):
            raise DivergenceError("linear predictor out of range")
        mu = np.exp(eta)
        sv = np.sqrt(mu)
        r = (y - mu) / sv       # A^{-1/2}(y - mu)
        G = X * sv[:, None]     # A^{-1/2} D, with D = diag(mu) X
    else:
        mu = eta
        r = y - mu
        G = X

    if rho == 0.0:
        score = G.T @ (w * r)
        info = G.T @ (G * w[:, None])
        return score, info, mu, r

    a = 1.0 / (1.0 - rho)
    score = a * (G.T @ (w * r))
    info = a * (G.T @ (G * w[:, None]))
    # b-term per unit: b [sum_k g_k][sum_k w_k r_k] and b [sum g][sum w g]'
    sizes = prob.group_sizes
    b = -rho / ((1.0 - rho) * (1.0 + (sizes - 1.0) * rho))
    g_sum = _segment_sums(G, prob.bounds)
    wg_sum = _segment_sums(G * w[:, None], prob.bounds)
    wr_sum = _segment_sums(w * r, prob.bounds)
    score += g_sum.T @ (b * wr_sum)
    info += (g_sum * b[:, None]).T @ wg_sum
    return score, info, mu, r


def _solve_step(info, score, symmetric):
    try:
        if symmetric:
            c, low = cho_factor(info, check_finite=False)
            step = cho_solve((c, low), score, check_finite=False)
        else:
            step = np.linalg.solve(info, score)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError(str(exc)) from None
    except ValueError:
        raise SingularDesignError("non-finite scoring matrix") from None
    if not np.all(np.isfinite(step)):
        raise SingularDesignError("singular or ill-conditioned design")
    return step


def _initial_xi(prob, family):
    y, X, w = prob.sorted_view()
    if family.tag == "poisson_log":
        z = np.log(np.maximum(y, 0.0) + 0.5)
    else:
        z = y
    A = X.T @ (X * w[:, None])
    try:
        c, low = cho_factor(A, check_finite=False)
        return cho_solve((c, low), X.T @ (w * z), check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        raise SingularDesignError(
            f"design not full rank on positively weighted rows (p={prob.p})"
        ) from None


def fit_gee(y, X, units, family, corr=INDEPENDENT, weights=None, *,
            max_iter=100, tol=1e-8) -> GeeFit:
    """Fit a weighted GEE by iteratively reweighted least squares.

    Parameters
    ----------
    y, X, units : array-likes
        Response (N,), design matrix (N, p), unit label per row.
    family : LinkFamily or str
        "gaussian_identity" or "poisson_log".
    corr : WorkingCorrelation
        Working correlation structure (default independent).
    weights : array-like or None
        Non-negative per-row observation weights (None = all ones).

    Stops when the max coefficient change drops below ``tol`` (then takes
    one polishing step), or flags ``converged=False`` after ``max_iter``
    sweeps or when the estimating function fails to vanish.
    """
    family = family_from_tag(family)
    y = np.asarray(y, dtype=float)
    if weights is None:
        weights = np.ones_like(y)
    prob = _Problem(y, X, units, weights)
    if corr.tag == "exchangeable" and corr.rho is not None:
        _check_rho(corr.rho, prob.k_max)

    xi = _initial_xi(prob, family)
    symmetric = corr.tag == "independent"
    rho = 0.0 if corr.tag == "independent" else (corr.rho if corr.rho is not None else 0.0)

    if family.tag == "gaussian_identity" and corr.tag == "independent":
        # the initial WLS solve is already the exact solution
        return _finalize(prob, family, corr, xi, 0.0, iterations=1, delta_converged=True)

    iterations = 0
    delta_converged = False
    polish = False
    pressed_boundary = 0
    while iterations < max_iter:
        iterations += 1
        score, info, mu, resid_p = _score_and_info(prob, family, xi, rho)
        step = _solve_step(info, score, symmetric)
        if family.tag == "poisson_log":
            # halve overshooting steps; a step pushing against the |eta|
            # bound on several consecutive sweeps means the solution lies
            # outside the safe region
            halvings = 0
            while np.any(np.abs(prob.X @ (xi + step)) > ETA_MAX):
                step = 0.5 * step
                halvings += 1
                if halvings > 40:
                    raise DivergenceError(
                        f"linear predictor out of range at iteration {iterations}"
                    )
            pressed_boundary = pressed_boundary + 1 if halvings else 0
            if pressed_boundary >= 5:
                raise DivergenceError(
                    f"linear predictor out of range at iteration {iterations}"
                )
        xi = xi + step
        if corr.tag == "exchangeable" and corr.rho is None:
            phi = max(_dispersion(resid_p, prob.sorted_view()[2]), _PHI_FLOOR)
            rho = _moment_rho(resid_p, prob.sorted_view()[2], prob.bounds, phi, prob.k_max)
        if polish:
            break
        if np.max(np.abs(step)) < tol:
            delta_converged = True
            polish = True  # one extra sweep pins the score to machine precision

    return _finalize(prob, family, corr, xi, rho, iterations, delta_converged)


def _finalize(prob, family, corr, xi, rho, iterations, delta_converged) -> GeeFit:
    score, _, mu, resid_p = _score_and_info(prob, family, xi, rho)
    w_sorted = prob.sorted_view()[2]
    phi = _dispersion(resid_p, w_sorted)
    ee_norm = float(np.max(np.abs(score / max(phi, _PHI_FLOOR))))
    fitted_corr = corr if corr.tag == "independent" else WorkingCorrelation("exchangeable", rho)
    return GeeFit(
        xi=xi,
        family=family,
        corr=fitted_corr,
        dispersion=phi,
        converged=bool(delta_converged and ee_norm < EE_TOL),
        iterations=iterations,
        ee_norm=ee_norm,
    )


def predict_mean(fit: GeeFit, x) -> float:
    """Marginal mean g^{-1}(x' xi) for one covariate vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != fit.xi.shape:
        raise ValueError(f"covariate vector length {x.shape} != coefficients {fit.xi.shape}")
    return float(fit.family.mean(x @ fit.xi))


def estimating_equation(xi, y, X, units, family, corr=INDEPENDENT, weights=None) -> np.ndarray:
    """Weighted GEE score at a candidate coefficient vector.

    The dispersion (and rho, when exchangeable with rho=None) are
    estimated at the candidate point, so the score is exactly linear in
    the weights.
    """
    family = family_from_tag(family)
    y = np.asarray(y, dtype=float)
    if weights is None:
        weights = np.ones_like(y)
    prob = _Problem(y, X, units, weights)
    xi = np.asarray(xi, dtype=float)

    rho = 0.0
    w_sorted = prob.sorted_view()[2]
    if corr.tag == "exchangeable":
        if corr.rho is not None:
            _check_rho(corr.rho, prob.k_max)
            rho = corr.rho
        else:
            _, _, _, resid_p = _score_and_info(prob, family, xi, 0.0)
            phi0 = max(_dispersion(resid_p, w_sorted), _PHI_FLOOR)
            rho = _moment_rho(resid_p, w_sorted, prob.bounds, phi0, prob.k_max)
    score, _, _, resid_p = _score_and_info(prob, family, xi, rho)
    phi = max(_dispersion(resid_p, w_sorted), _PHI_FLOOR)
    return score / phi
