"""Field models binding a mean specification to an underlying correlation,
and covariance-matrix assembly for linear prediction and Gaussian fits."""

from dataclasses import dataclass

import numpy as np

from .correlation import (
    CorrelationModel,
    rho_poisson_nonstationary_batch,
    rho_poisson_stationary,
    underlying_from_distance,
)
from .errors import DataError, NumericalError
from .specfun import bivariate_normal_cdf, normal_cdf

__all__ = [
    "PoissonFieldModel",
    "ZipFieldModel",
    "build_covariance",
    "count_correlation_matrix",
    "cholesky_psd",
]


def _as_design(covariates, n):
    x = np.atleast_2d(np.asarray(covariates, dtype=float))
    if x.shape[0] == 1 and n > 1:
        x = np.broadcast_to(x, (n, x.shape[1])).copy()
    if x.shape[0] != n:
        raise DataError(f"design matrix has {x.shape[0]} rows for {n} locations")
    return x


@dataclass(frozen=True)
class PoissonFieldModel:
    """Count field with log-linear mean lambda(s) = exp(x(s)' beta) observed
    over the horizon ``t`` (counts are Poisson(t lambda(s)) marginally)."""

    beta: np.ndarray
    covariates: np.ndarray
    corr: CorrelationModel
    t: float = 1.0

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float).ravel()
        x = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        if x.shape[1] != beta.shape[0]:
            raise DataError(
                f"design matrix has {x.shape[1]} columns for {beta.shape[0]} coefficients"
            )
        if not np.allclose(x[:, 0], 1.0):
            raise DataError("design matrix must carry a constant first column")
        if not self.t > 0.0:
            raise ValueError("horizon t must be positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "covariates", x)

    @property
    def n_sites(self):
        return self.covariates.shape[0]

    def rates(self):
        """Mean vector t * lambda(s); horizon rescaling folds t into the rate
        everywhere downstream (counts over [0, t] with rate lambda equal in
        law to counts over [0, 1] with rate t lambda, jointly across sites)."""
        return self.t * np.exp(self.covariates @ self.beta)

    @classmethod
    def intercept_only(cls, log_rate, n, corr, t=1.0):
        return cls(np.array([log_rate]), np.ones((n, 1)), corr, t)


@dataclass(frozen=True)
class ZipFieldModel:
    """Zero-inflated count field Y = B N: a Poisson layer ``base`` masked by
    an independent thresholded-Gaussian layer with mean ``theta`` and
    underlying correlation ``corr_b``."""

    base: PoissonFieldModel
    theta: float
    corr_b: CorrelationModel

    @property
    def zero_inflation(self):
        """p = Pr(mask suppresses the count) = Phi(theta)."""
        return normal_cdf(self.theta)

    def rates(self):
        return self.base.rates()

    def means(self):
        return (1.0 - self.zero_inflation) * self.base.rates()

    def variances(self):
        p = self.zero_inflation
        lam = self.base.rates()
        mean = (1.0 - p) * lam
        return mean * (1.0 + p * lam)


def count_correlation_matrix(corr, lam, dist, tlag=None, ctrl=None):
    """Count-field correlation matrix from the underlying model and rates.

    Off-support entries stay exactly zero (pairwise independence); the
    constant-rate case uses the closed Bessel form, otherwise the
    incomplete-gamma series is evaluated on the in-support entries only.
    """
    lam = np.asarray(lam, dtype=float)
    rho_u = underlying_from_distance(corr, dist, 0.0 if tlag is None else tlag)
    rho_u = np.asarray(rho_u, dtype=float)
    out = np.zeros_like(rho_u)
    nz = rho_u != 0.0
    if np.all(lam == lam.flat[0]):
        out[nz] = rho_poisson_stationary(rho_u[nz], lam.flat[0])
    else:
        li = np.broadcast_to(lam[:, None], rho_u.shape)
        lj = np.broadcast_to(lam[None, :], rho_u.shape)
        out[nz] = rho_poisson_nonstationary_batch(rho_u[nz], li[nz], lj[nz], ctrl)
    return out


def build_covariance(model, locs, ctrl=None, ensure_pd=True):
    """Covariance matrix of the observed counts at ``locs``.

    For the Poisson field, Sigma_ij = sqrt(lam_i lam_j) rho_N(s_i, s_j) with
    marginal-variance diagonal; the zero-inflated field replaces moments by
    the masked-layer mean/variance and its cross-moment correlation.  With
    ``ensure_pd`` a Cholesky factorization is attempted (escalating jitter
    ladder) and the jitter-adjusted matrix is returned.
    """
    n = len(locs)
    dist = locs.distance_matrix()
    tlag = locs.time_lag_matrix()
    if isinstance(model, ZipFieldModel):
        if model.base.n_sites != n:
            raise DataError("model is bound to a different number of sites")
        lam = model.base.rates()
        rho_n = count_correlation_matrix(model.base.corr, lam, dist, tlag, ctrl)
        e_nn = np.sqrt(np.outer(lam, lam)) * rho_n + np.outer(lam, lam)
        rho_b = np.asarray(
            underlying_from_distance(model.corr_b, dist, 0.0 if tlag is None else tlag),
            dtype=float,
        )
        theta = model.theta
        e_bb = np.where(
            rho_b == 0.0,
            normal_cdf(-theta) ** 2,
            bivariate_normal_cdf(-theta, -theta, np.clip(rho_b, -0.9999999999, 0.9999999999)),
        )
        means = model.means()
        cov = e_bb * e_nn - np.outer(means, means)
        np.fill_diagonal(cov, model.variances())
    else:
        if model.n_sites != n:
            raise DataError("model is bound to a different number of sites")
        lam = model.rates()
        rho_n = count_correlation_matrix(model.corr, lam, dist, tlag, ctrl)
        np.fill_diagonal(rho_n, 1.0)
        cov = np.sqrt(np.outer(lam, lam)) * rho_n
    if ensure_pd:
        _, jitter = cholesky_psd(cov)
        if jitter > 0.0:
            cov = cov + jitter * np.eye(n)
    return cov


def count_correlation_cross(corr, lam_a, lam_b, dist, tlag=None, ctrl=None):
    """Count-field correlation between two location sets (rectangular)."""
    rho_u = np.asarray(
        underlying_from_distance(corr, dist, 0.0 if tlag is None else tlag), dtype=float
    )
    out = np.zeros_like(rho_u)
    nz = rho_u != 0.0
    if not np.any(nz):
        return out
    la = np.broadcast_to(np.asarray(lam_a, dtype=float)[:, None], rho_u.shape)
    lb = np.broadcast_to(np.asarray(lam_b, dtype=float)[None, :], rho_u.shape)
    if np.all(la[nz] == lb[nz]):
        out[nz] = rho_poisson_stationary(rho_u[nz], la[nz])
    else:
        out[nz] = rho_poisson_nonstationary_batch(rho_u[nz], la[nz], lb[nz], ctrl)
    return out


def build_cross_covariance(model, locs, targets, target_covariates=None, ctrl=None):
    """Cross-covariance between observed sites and prediction targets,
    plus the targets' marginal means and variances.

    Returns ``(c, mean0, var0)`` with ``c`` of shape (n_obs, n_targets).
    """
    if target_covariates is None:
        k = (model.base if isinstance(model, ZipFieldModel) else model).covariates.shape[1]
        if k != 1:
            raise DataError("target covariates are required for a regression mean")
        target_covariates = np.ones((len(targets), 1))
    dist = locs.cross_distance(targets)
    tlag = locs.cross_time_lag(targets)
    if isinstance(model, ZipFieldModel):
        base = model.base
        lam = base.rates()
        lam0 = base.t * np.exp(_as_design(target_covariates, len(targets)) @ base.beta)
        rho_n = count_correlation_cross(base.corr, lam, lam0, dist, tlag, ctrl)
        e_nn = np.sqrt(np.outer(lam, lam0)) * rho_n + np.outer(lam, lam0)
        rho_b = np.asarray(
            underlying_from_distance(model.corr_b, dist, 0.0 if tlag is None else tlag),
            dtype=float,
        )
        theta = model.theta
        e_bb = np.where(
            rho_b == 0.0,
            normal_cdf(-theta) ** 2,
            bivariate_normal_cdf(-theta, -theta, np.clip(rho_b, -0.9999999999, 0.9999999999)),
        )
        p = model.zero_inflation
        mean = (1.0 - p) * lam
        mean0 = (1.0 - p) * lam0
        c = e_bb * e_nn - np.outer(mean, mean0)
        var0 = mean0 * (1.0 + p * lam0)
        return c, mean0, var0
    lam = model.rates()
    lam0 = model.t * np.exp(_as_design(target_covariates, len(targets)) @ model.beta)
    rho_n = count_correlation_cross(model.corr, lam, lam0, dist, tlag, ctrl)
    c = np.sqrt(np.outer(lam, lam0)) * rho_n
    return c, lam0, lam0.copy()


def cholesky_psd(mat):
    """Lower Cholesky factor with an escalating jitter ladder.

    Adds 1e-10 * I, escalating tenfold up to 1e-6, before declaring the
    matrix indefinite; jitter is only meant to absorb floating-point noise
    on theoretically valid covariances.  Returns ``(L, jitter_used)``.
    """
    try:
        return np.linalg.cholesky(mat), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = 1e-10
    eye = np.eye(mat.shape[0])
    while jitter <= 1e-6:
        try:
            return np.linalg.cholesky(mat + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(
        "covariance matrix is indefinite beyond the 1e-6 jitter threshold"
    )
