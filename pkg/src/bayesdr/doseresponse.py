"""Bayesian dose-response estimators and the posterior sampling loop.

Two estimators of the average potential outcome (APO) curve:

* COV: outcome GEE on [1, dose, cubic spline of the fitted GPS]; the
  APO at dose d averages predictions over the draw's rows with the GPS
  evaluated at the counterfactual dose d for each row's covariates.
* WOR: outcome GEE on [1, cubic spline of dose], weighted by
  (stabilized) inverse-GPS weights; the APO is the direct prediction.

Posterior uncertainty comes from re-fitting both the treatment and
outcome models on every Bayesian-bootstrap or Dirichlet-process draw
(draw s uses RngStream(seed, s)); the result is an S x G matrix of APO
samples over the dose grid. Draws are embarrassingly parallel and the
assembled output is independent of the worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .gee import (
    INDEPENDENT,
    DivergenceError,
    GeeFit,
    SingularDesignError,
    WorkingCorrelation,
    family_from_tag,
    fit_gee,
)
from .gps import (
    GpsFit,
    MarginalDoseFit,
    fit_gps_gee_arrays,
    fit_gps_random_intercept_arrays,
    fit_marginal_dose,
    gps_density_rows,
    stabilized_weight_rows,
)
from .panel import PanelDataset
from .resample import ResampleDraw, RngStream, draw_bb, draw_dp
from .splines import DegenerateRangeError, SplineBasis, build_basis

__all__ = [
    "EstimatorConfig",
    "DoseResponseFit",
    "ApoPosterior",
    "SyntheticOutcomeGenerator",
    "PosteriorError",
    "fit_cov",
    "fit_wor",
    "apo_at",
    "posterior_apo",
    "summarize",
]

MAX_FAILURE_FRACTION = 0.05

_DRAW_ERRORS = (SingularDesignError, DivergenceError, DegenerateRangeError,
                np.linalg.LinAlgError, FloatingPointError)


class PosteriorError(RuntimeError):
    """Too many resampling draws failed to fit."""


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings for one posterior dose-response run.

    ``gps_kind=None`` resolves by resampler: the DP loop refits the
    treatment model with a random intercept, the plain Bayesian
    bootstrap uses the GEE treatment model.
    """

    method: str = "cov"
    resampler: str = "dp"
    alpha: float = 5.0
    j_target: int = 500
    epsilon: float = 1e-8
    n_draws: int = 500
    seed: int = 0
    spline_interior_knots: int = 2
    family: str = "gaussian_identity"
    corr: WorkingCorrelation = INDEPENDENT
    dose_grid: tuple = (3.0, 4.0, 5.0)
    gps_kind: str | None = None
    stabilize: bool = True
    synthetic_outcomes: str = "mixture"

    def __post_init__(self):
        if self.method not in ("cov", "wor"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.resampler not in ("bb", "dp"):
            raise ValueError(f"unknown resampler {self.resampler!r}")
        if self.synthetic_outcomes not in ("mixture", "all"):
            raise ValueError(f"unknown synthetic_outcomes {self.synthetic_outcomes!r}")
        if self.gps_kind not in (None, "gee", "random_intercept"):
            raise ValueError(f"unknown gps_kind {self.gps_kind!r}")
        if self.resampler == "dp" and self.alpha <= 0:
            raise ValueError("alpha must be > 0 for the DP resampler")
        if self.n_draws < 1:
            raise ValueError("n_draws must be >= 1")
        grid = tuple(float(d) for d in self.dose_grid)
        if len(grid) == 0:
            raise ValueError("dose_grid must be non-empty")
        if len(grid) > 1 and not all(a < b for a, b in zip(grid, grid[1:])):
            raise ValueError("dose_grid must be strictly increasing")
        object.__setattr__(self, "dose_grid", grid)
        family_from_tag(self.family)

    @property
    def resolved_gps_kind(self) -> str:
        if self.gps_kind is not None:
            return self.gps_kind
        return "random_intercept" if self.resampler == "dp" else "gee"


@dataclass(frozen=True)
class DoseResponseFit:
    """One draw's fitted estimator: outcome GEE, GPS model and spline."""

    outcome_fit: GeeFit
    gps_fit: GpsFit
    spline: SplineBasis
    method: str
    marg: MarginalDoseFit | None = None

    def __post_init__(self):
        lead = 2 if self.method == "cov" else 1  # intercept (+ dose for cov)
        expect = lead + self.spline.basis_dim - 1
        if len(self.outcome_fit.xi) != expect:
            raise ValueError(
                f"coefficient length {len(self.outcome_fit.xi)} inconsistent with "
                f"basis_dim {self.spline.basis_dim} for method {self.method!r}"
            )


@dataclass(frozen=True)
class ApoPosterior:
    """S x G matrix of APO draws over a dose grid, plus failure log."""

    samples: np.ndarray
    dose_grid: tuple
    method: str
    resampler: str
    failures: tuple = ()

    @property
    def n_draws(self) -> int:
        return self.samples.shape[0]

    @property
    def summaries(self) -> dict:
        return summarize(self)


@dataclass
class SyntheticOutcomeGenerator:
    """Regenerates base-measure outcomes from per-draw preliminary fits.

    The preliminary outcome model is the COV form (y on [1, dose,
    spline(GPS)]) regardless of the final estimator; its fitted means
    are the base-measure mean. Gaussian outcomes are drawn as
    N(mu_hat, 1), Poisson outcomes as Poisson(mu_hat). ``mode`` selects
    whether only base-measure rows ("mixture") or every row ("all") is
    regenerated.
    """

    family: str
    spline_interior_knots: int = 2
    gps_kind: str = "random_intercept"
    corr: WorkingCorrelation = INDEPENDENT
    mode: str = "mixture"
    gps_fit: GpsFit | None = field(default=None, init=False)
    outcome_fit: GeeFit | None = field(default=None, init=False)
    basis: SplineBasis | None = field(default=None, init=False)
    design: np.ndarray | None = field(default=None, init=False)

    def regenerate(self, draw: ResampleDraw, rng: np.random.Generator) -> None:
        fam = family_from_tag(self.family)
        w = draw.row_weights()
        self.gps_fit = _fit_gps(draw, self.gps_kind, w, self.corr)
        gps_vals = gps_density_rows(self.gps_fit, draw.d, draw.x, draw.row_atom)
        self.basis = build_basis(gps_vals, self.spline_interior_knots)
        design = _cov_design(draw.d, gps_vals, self.basis)
        self.design = design  # unchanged by regeneration: GPS depends on (d, x) only
        self.outcome_fit = fit_gee(draw.y, design, draw.row_atom, fam, self.corr, w)
        mu = fam.mean(design @ self.outcome_fit.xi)

        if self.mode == "all":
            rows = np.arange(draw.n_rows)
        else:
            base_rows = np.isin(draw.row_atom, np.nonzero(draw.origins)[0])
            rows = np.nonzero(base_rows)[0]
        if rows.size == 0:
            return
        if fam.tag == "poisson_log":
            draw.y[rows] = rng.poisson(mu[rows]).astype(float)
        else:
            draw.y[rows] = mu[rows] + rng.standard_normal(rows.size)


def _fit_gps(draw: ResampleDraw, kind: str, weights, corr) -> GpsFit:
    if kind == "random_intercept":
        return fit_gps_random_intercept_arrays(draw.d, draw.x, draw.row_atom, weights)
    return fit_gps_gee_arrays(draw.d, draw.x, draw.row_atom, weights, corr)


def _cov_design(d, gps_vals, basis: SplineBasis) -> np.ndarray:
    cols = basis.regression_columns(gps_vals)
    out = np.empty((len(cols), 2 + cols.shape[1]))
    out[:, 0] = 1.0
    out[:, 1] = d
    out[:, 2:] = cols
    return out


def _wor_design(d, basis: SplineBasis) -> np.ndarray:
    cols = basis.regression_columns(d)
    out = np.empty((len(cols), 1 + cols.shape[1]))
    out[:, 0] = 1.0
    out[:, 1:] = cols
    return out


def _check_rows(draw: ResampleDraw, cfg: EstimatorConfig):
    need = (cfg.spline_interior_knots + 4) + 2
    if int(np.count_nonzero(draw.row_weights() > 0)) < need:
        raise SingularDesignError(
            f"only {np.count_nonzero(draw.row_weights() > 0)} positively weighted rows; "
            f"need at least {need}"
        )


def fit_cov(draw: ResampleDraw, cfg: EstimatorConfig,
            gps_fit: GpsFit | None = None, _prep=None) -> DoseResponseFit:
    """COV estimator on one draw: y ~ [1, dose, spline(GPS)], draw-weighted.

    ``_prep=(basis, design)`` reuses the generator's spline and design
    matrix, which outcome regeneration leaves unchanged.
    """
    _check_rows(draw, cfg)
    w = draw.row_weights()
    if gps_fit is None:
        gps_fit = _fit_gps(draw, cfg.resolved_gps_kind, w, cfg.corr)
    if _prep is not None:
        basis, design = _prep
    else:
        gps_vals = gps_density_rows(gps_fit, draw.d, draw.x, draw.row_atom)
        basis = build_basis(gps_vals, cfg.spline_interior_knots)
        design = _cov_design(draw.d, gps_vals, basis)
    outcome = fit_gee(draw.y, design, draw.row_atom, cfg.family, cfg.corr, w)
    return DoseResponseFit(outcome_fit=outcome, gps_fit=gps_fit, spline=basis,
                           method="cov")


def fit_wor(draw: ResampleDraw, cfg: EstimatorConfig,
            gps_fit: GpsFit | None = None) -> DoseResponseFit:
    """WOR estimator on one draw: y ~ [1, spline(dose)], GPS-weighted."""
    _check_rows(draw, cfg)
    w = draw.row_weights()
    if gps_fit is None:
        gps_fit = _fit_gps(draw, cfg.resolved_gps_kind, w, cfg.corr)
    marg = fit_marginal_dose(draw.d, w) if cfg.stabilize else None
    sw = stabilized_weight_rows(gps_fit, marg, draw.d, draw.x, draw.row_atom)
    basis = build_basis(draw.d, cfg.spline_interior_knots)
    design = _wor_design(draw.d, basis)
    outcome = fit_gee(draw.y, design, draw.row_atom, cfg.family, cfg.corr, w * sw)
    return DoseResponseFit(outcome_fit=outcome, gps_fit=gps_fit, spline=basis,
                           method="wor", marg=marg)


def apo_at(fit: DoseResponseFit, d: float, draw: ResampleDraw) -> float:
    """APO of one fitted draw at dose d.

    WOR reads the marginal prediction off the dose spline. COV averages
    row-level predictions with the GPS evaluated at the counterfactual
    dose d given each row's covariates, weighting rows by their atom
    weight spread equally over the atom's rows.
    """
    fam = fit.outcome_fit.family
    xi = fit.outcome_fit.xi
    if fit.method == "wor":
        row = _wor_design(np.array([float(d)]), fit.spline)[0]
        return float(fam.mean(row @ xi))
    omega = draw.apo_row_weights()
    dens_cf = gps_density_rows(fit.gps_fit, float(d), draw.x, draw.row_atom)
    design = _cov_design(np.full(draw.n_rows, float(d)), dens_cf, fit.spline)
    mu = fam.mean(design @ xi)
    return float(np.sum(omega * mu))


def _one_draw(data: PanelDataset, cfg: EstimatorConfig, s: int) -> np.ndarray:
    rng = RngStream(cfg.seed, s).generator()
    if cfg.resampler == "bb":
        draw = draw_bb(data, rng)
        gps_fit = None
        prep = None
    else:
        gen = SyntheticOutcomeGenerator(
            family=cfg.family,
            spline_interior_knots=cfg.spline_interior_knots,
            gps_kind=cfg.resolved_gps_kind,
            corr=cfg.corr,
            mode=cfg.synthetic_outcomes,
        )
        draw = draw_dp(data, cfg.alpha, cfg.j_target, gen, rng, epsilon=cfg.epsilon)
        gps_fit = gen.gps_fit
        prep = (gen.basis, gen.design)
    if cfg.method == "cov":
        fit = fit_cov(draw, cfg, gps_fit=gps_fit, _prep=prep)
    else:
        fit = fit_wor(draw, cfg, gps_fit=gps_fit)
    return np.array([apo_at(fit, d, draw) for d in cfg.dose_grid])


def _run_range(data, cfg, draws):
    out = []
    for s in draws:
        try:
            out.append((s, _one_draw(data, cfg, s), None))
        except _DRAW_ERRORS as exc:
            out.append((s, None, f"{type(exc).__name__}: {exc}"))
    return out


def posterior_apo(data: PanelDataset, cfg: EstimatorConfig, n_jobs: int = 1) -> ApoPosterior:
    """Generate S posterior APO samples over the dose grid.

    Draw s uses RngStream(cfg.seed, s), so the samples matrix is
    identical for any ``n_jobs``. Draws whose fits fail are recorded and
    skipped; if more than 5% fail the whole call raises PosteriorError.
    """
    fam = family_from_tag(cfg.family)
    if fam.tag != data.family:
        raise ValueError(f"config family {fam.tag!r} != dataset family {data.family!r}")
    data.arrays()  # materialize the pooled view once, before workers fork
    s_values = list(range(1, cfg.n_draws + 1))
    if n_jobs == 1 or cfg.n_draws == 1:
        results = _run_range(data, cfg, s_values)
    else:
        chunks = np.array_split(s_values, min(4 * n_jobs, len(s_values)))
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_run_range)(data, cfg, list(chunk)) for chunk in chunks if len(chunk)
        )
        results = [item for part in parts for item in part]

    results.sort(key=lambda t: t[0])
    rows = [r for _, r, err in results if err is None]
    failures = tuple((s, err) for s, _, err in results if err is not None)
    if len(failures) > MAX_FAILURE_FRACTION * cfg.n_draws:
        detail = "; ".join(f"draw {s}: {msg}" for s, msg in failures[:10])
        raise PosteriorError(
            f"{len(failures)}/{cfg.n_draws} draws failed (> {MAX_FAILURE_FRACTION:.0%}): {detail}"
        )
    samples = np.array(rows) if rows else np.empty((0, len(cfg.dose_grid)))
    return ApoPosterior(samples=samples, dose_grid=cfg.dose_grid, method=cfg.method,
                        resampler=cfg.resampler, failures=failures)


def summarize(apo: ApoPosterior) -> dict:
    """Per-dose posterior summaries.

    Variance uses the S-1 denominator; quantiles use the linear-
    interpolation rule (numpy default).
    """
    if apo.n_draws < 2:
        raise ValueError("need at least 2 posterior draws to summarize")
    s = apo.samples
    return {
        "dose": np.array(apo.dose_grid),
        "mean": s.mean(axis=0),
        "var": s.var(axis=0, ddof=1),
        "median": np.median(s, axis=0),
        "q025": np.quantile(s, 0.025, axis=0),
        "q975": np.quantile(s, 0.975, axis=0),
    }


def config_with(cfg: EstimatorConfig, **kwargs) -> EstimatorConfig:
    """dataclasses.replace that re-runs validation."""
    return replace(cfg, **kwargs)
