"""Spatial count random fields built on renewal counting.

A count field attaches to every site a Poisson counting process whose
exponentially distributed inter-arrival times come from a shared latent
Gaussian field, so counts are marginally Poisson and spatially dependent
without any conditional-independence layer.  The package provides exact
simulation, closed-form correlation and joint pmf evaluation, weighted
pairwise-likelihood estimation (with misspecified-Gaussian baselines),
best linear prediction, a zero-inflated extension and a simulation-study
harness, plus the ``countfield`` CLI.
"""

from .bivariate import (
    BivariatePoissonQuery,
    bivariate_pmf,
    exp_bivariate_pdf,
    exp_multivariate_pdf_1d,
    joint_pmf_batch,
    pmf_table,
    poisson_marginal_pmf,
    zip_bivariate_pmf,
    zip_marginal_pmf,
)
from .correlation import (
    CorrelationModel,
    Lag,
    LgParams,
    lg_nugget,
    rho_poisson_gc,
    rho_poisson_lg,
    rho_poisson_nonstationary,
    rho_poisson_stationary,
    rho_underlying,
    rho_zip,
    underlying_from_distance,
)
from .errors import (
    CountFieldError,
    DataError,
    NonConvergenceError,
    NoPairsError,
    NumericalError,
    SeriesTruncationError,
)
from .estimate import (
    FieldData,
    FitConfig,
    FitResult,
    OptimizerConfig,
    PairWeights,
    ParameterVector,
    bootstrap_std_errors,
    default_init,
    fit_by_method,
    fit_gaussian_ml,
    fit_gaussian_wpl,
    fit_poisson_wpl,
    fit_zip_wpl,
    godambe_std_errors,
    wpl_objective,
)
from .locations import LocationSet, perturbed_grid, space_time_product, uniform_sites
from .models import (
    PoissonFieldModel,
    ZipFieldModel,
    build_covariance,
    build_cross_covariance,
    cholesky_psd,
)
from .predict import CrossvalResult, PredictionResult, crossval_rmse, linear_predict
from .rng import SeedSpec
from .simulate import (
    simulate_exponential,
    simulate_gaussian,
    simulate_poisson_field,
    simulate_zip_field,
)
from .specfun import (
    DEFAULT_CONTROL,
    SeriesControl,
    bessel_i_scaled,
    bivariate_normal_cdf,
    log_reg_confluent_1f1,
    log_reg_lower_inc_gamma,
    normal_cdf,
    normal_quantile,
    pochhammer_log,
    poisson_quantile,
    reg_confluent_1f1,
    reg_inc_gamma_product,
    reg_lower_inc_gamma,
    s_kernel,
)
from .study import (
    OracleTable,
    SemivariogramResult,
    StudyReport,
    StudySpec,
    empirical_semivariogram,
    mc_bivariate_oracle,
    run_study,
    simulate_pair_counts,
)

__version__ = "0.1.0"
