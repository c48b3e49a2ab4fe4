"""Bayesian-bootstrap and Dirichlet-process posterior inference for
longitudinal causal dose-response curves.

The pipeline: a generalized-propensity-score model and a marginal
outcome model, both fit by weighted generalized estimating equations,
re-estimated on Bayesian-bootstrap or Dirichlet-process resampling
draws to produce posterior samples of the average potential outcome
over a dose grid.
"""

from .doseresponse import (
    ApoPosterior,
    DoseResponseFit,
    EstimatorConfig,
    PosteriorError,
    SyntheticOutcomeGenerator,
    apo_at,
    fit_cov,
    fit_wor,
    posterior_apo,
    summarize,
)
from .gee import (
    GAUSSIAN_IDENTITY,
    INDEPENDENT,
    POISSON_LOG,
    DivergenceError,
    GeeFit,
    LinkFamily,
    SingularDesignError,
    WorkingCorrelation,
    estimating_equation,
    fit_gee,
    predict_mean,
)
from .gps import (
    GpsFit,
    MarginalDoseFit,
    fit_gps_gee,
    fit_gps_random_intercept,
    fit_marginal_dose,
    gps_density,
    stabilized_weight,
)
from .panel import (
    IntegrityError,
    PanelDataset,
    PanelParseError,
    SchemaError,
    Trajectory,
    Transform,
    apply_transform,
    parse_panel_csv,
    pooled_rows,
    write_panel_csv,
)
from .resample import (
    ResampleDraw,
    RngStream,
    StickWeights,
    derive_seed,
    dirichlet_flat_weights,
    draw_bb,
    draw_dp,
    stick_breaking,
)
from .simlab import (
    DgpSpec,
    SimReport,
    SimulationError,
    generate_example1,
    generate_example2,
    run_replications,
    true_apo_example1,
    true_apo_example2,
    write_simreport_csv,
)
from .splines import DegenerateRangeError, SplineBasis, build_basis, eval_basis

__version__ = "0.1.0"
