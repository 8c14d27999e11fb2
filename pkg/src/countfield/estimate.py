"""Weighted pairwise-likelihood estimation and Gaussian baselines.

The pairwise likelihood sums log joint pmfs over location pairs within a
spatial (and, for space-time data, temporal) cut-off; distant pairs carry
weight zero and are never evaluated.  Three likelihood kernels share the
machinery:

* ``poisson_wpl``  exact joint count pmf of the renewal construction,
* ``gaussian_wpl`` bivariate Gaussian density with the count field's true
  means, variances and correlation (deliberate misspecification, cheaper),
* ``gaussian_ml``  full multivariate Gaussian likelihood (one Cholesky per
  objective evaluation),
* ``zip_wpl``      joint pmf of the zero-inflated field.

Optimization is derivative-free Nelder-Mead over smoothly transformed
parameters (log ranges, logit nugget), with restarts from the incumbent;
series truncation makes finite-difference gradients too noisy for
quasi-Newton methods to be trustworthy here.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import optimize as sp_optimize
from scipy import special as sp_special
from scipy.linalg import solve_triangular

from .bivariate import RHO_MAX, STATUS_OK, _joint_pmf_batch
from .correlation import (
    CorrelationModel,
    rho_poisson_nonstationary_batch,
    rho_poisson_stationary,
    underlying_from_distance,
)
from .errors import DataError, NonConvergenceError, NoPairsError
from .locations import LocationSet
from .models import PoissonFieldModel, ZipFieldModel, count_correlation_matrix
from .rng import SeedSpec
from .specfun import DEFAULT_CONTROL, bivariate_normal_cdf, normal_cdf, normal_quantile

__all__ = [
    "FieldData",
    "PairWeights",
    "ParameterVector",
    "OptimizerConfig",
    "FitConfig",
    "FitResult",
    "wpl_objective",
    "fit_poisson_wpl",
    "fit_gaussian_wpl",
    "fit_gaussian_ml",
    "fit_zip_wpl",
    "bootstrap_std_errors",
    "godambe_std_errors",
    "default_init",
]

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass
class FieldData:
    """Observed counts with their locations and design matrix."""

    locs: LocationSet
    counts: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.counts)
        if np.any(y < 0) or not np.all(np.equal(np.mod(y, 1), 0)):
            raise DataError("counts must be nonnegative integers")
        self.counts = y.astype(np.int64)
        x = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        n = len(self.locs)
        if self.counts.shape[0] != n or x.shape[0] != n:
            raise DataError("counts and covariates must align with the locations")
        if not np.allclose(x[:, 0], 1.0):
            raise DataError("design matrix must carry a constant first column")
        self.covariates = x

    @property
    def n_obs(self):
        return self.counts.shape[0]

    def subset(self, idx):
        return FieldData(self.locs.subset(idx), self.counts[idx], self.covariates[idx])


@dataclass(frozen=True)
class PairWeights:
    """Cut-off pair weights: a pair contributes iff its spatial distance is
    <= xi_s (boundary inclusive) and, on space-time data, |time lag| <= xi_t."""

    xi_s: float
    xi_t: Optional[float] = None

    def __post_init__(self):
        if not self.xi_s > 0.0:
            raise ValueError("spatial cut-off xi_s must be positive")
        if self.xi_t is not None and self.xi_t < 0.0:
            raise ValueError("temporal cut-off xi_t must be nonnegative")


@dataclass(frozen=True)
class ParameterVector:
    """Model parameters in natural scale.

    ``nugget`` belongs to the underlying correlation of the count layer;
    the zero-inflated fit adds the mask mean ``theta`` and the mask layer's
    own nugget ``nugget_b`` (both layers share the range ``alpha``).
    """

    beta: np.ndarray
    alpha: float
    alpha_t: Optional[float] = None
    nugget: float = 0.0
    theta: Optional[float] = None
    nugget_b: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).ravel())
        if not self.alpha > 0.0:
            raise ValueError("range alpha must be positive")
        if self.alpha_t is not None and not self.alpha_t > 0.0:
            raise ValueError("temporal range alpha_t must be positive")
        for name in ("nugget", "nugget_b"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")

    def to_dict(self):
        return {
            "beta": [float(b) for b in self.beta],
            "alpha": float(self.alpha),
            "alpha_t": None if self.alpha_t is None else float(self.alpha_t),
            "nugget": float(self.nugget),
            "theta": None if self.theta is None else float(self.theta),
            "nugget_b": None if self.nugget_b is None else float(self.nugget_b),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            beta=np.asarray(d["beta"], dtype=float),
            alpha=float(d["alpha"]),
            alpha_t=None if d.get("alpha_t") is None else float(d["alpha_t"]),
            nugget=float(d.get("nugget", 0.0)),
            theta=None if d.get("theta") is None else float(d["theta"]),
            nugget_b=None if d.get("nugget_b") is None else float(d["nugget_b"]),
        )


@dataclass(frozen=True)
class OptimizerConfig:
    max_evals: int = 2000
    fatol: float = 1e-6
    xatol: float = 1e-5
    restarts: int = 2


@dataclass(frozen=True)
class FitConfig:
    """Estimation configuration: correlation family, fixed parameters and
    optimizer/series controls.  ``fixed`` names parameters held at their
    initial values ('nugget' is fixed by default; pass fixed=() to free it)."""

    family: str = "gw4"
    fixed: tuple = ("nugget",)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    ctrl: object = None
    t: float = 1.0

    def control(self):
        return self.ctrl or DEFAULT_CONTROL


@dataclass
class FitResult:
    estimate: ParameterVector
    objective: float
    n_pairs_used: int
    converged: bool
    iterations: int
    method: str
    family: str
    t: float = 1.0
    std_errors: Optional[dict] = None
    covariate_columns: Optional[list] = None

    def to_dict(self):
        return {
            "method": self.method,
            "family": self.family,
            "t": self.t,
            "estimate": self.estimate.to_dict(),
            "objective": float(self.objective),
            "n_pairs_used": int(self.n_pairs_used),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "std_errors": self.std_errors,
            "covariate_columns": self.covariate_columns,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            estimate=ParameterVector.from_dict(d["estimate"]),
            objective=float(d["objective"]),
            n_pairs_used=int(d["n_pairs_used"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            method=d["method"],
            family=d["family"],
            t=float(d.get("t", 1.0)),
            std_errors=d.get("std_errors"),
            covariate_columns=d.get("covariate_columns"),
        )

    def correlation_model(self):
        return _corr_from_params(self.estimate, self.family)

    def field_model(self, covariates):
        """Materialize the fitted model on a concrete design matrix."""
        base = PoissonFieldModel(self.estimate.beta, covariates, self.correlation_model(), self.t)
        if self.method == "zip_wpl":
            corr_b = CorrelationModel(
                self.family,
                self.estimate.alpha,
                self.estimate.nugget_b or 0.0,
                self.estimate.alpha_t,
            )
            return ZipFieldModel(base, self.estimate.theta, corr_b)
        return base


def _corr_from_params(pv, family):
    if family == "gw4_spacetime":
        return CorrelationModel(family, pv.alpha, pv.nugget, pv.alpha_t)
    return CorrelationModel(family, pv.alpha, pv.nugget)


# ---------------------------------------------------------------------------
# parameter packing (optimizer space <-> natural scale)
# ---------------------------------------------------------------------------

def _logit(p):
    return math.log(p / (1.0 - p))


def _expit(x):
    return 1.0 / (1.0 + math.exp(-x))


class _Packing:
    """Maps the free parameters onto an unconstrained optimizer vector:
    regression coefficients raw, ranges through log, nuggets through logit,
    mask mean raw."""

    _SCALARS = ("alpha", "alpha_t", "nugget", "theta", "nugget_b")

    def __init__(self, template, family, method, fixed):
        self.template = template
        names = []
        if "beta" not in fixed:
            names.extend(f"beta{i}" for i in range(template.beta.shape[0]))
        for s in self._SCALARS:
            if getattr(template, s) is None or s in fixed:
                continue
            if s == "alpha_t" and family != "gw4_spacetime":
                continue
            names.append(s)
        self.names = names

    def pack(self, pv):
        out = []
        for name in self.names:
            if name.startswith("beta"):
                out.append(pv.beta[int(name[4:])])
            elif name in ("alpha", "alpha_t"):
                out.append(math.log(getattr(pv, name)))
            elif name in ("nugget", "nugget_b"):
                out.append(_logit(min(max(getattr(pv, name), 1e-8), 1.0 - 1e-8)))
            else:
                out.append(getattr(pv, name))
        return np.asarray(out, dtype=float)

    def unpack(self, x):
        beta = self.template.beta.copy()
        kw = {}
        for name, v in zip(self.names, x):
            if name.startswith("beta"):
                beta[int(name[4:])] = v
            elif name in ("alpha", "alpha_t"):
                kw[name] = math.exp(min(v, 50.0))
            elif name in ("nugget", "nugget_b"):
                kw[name] = _expit(v)
            else:
                kw[name] = v
        return replace(self.template, beta=beta, **kw)


# ---------------------------------------------------------------------------
# pair machinery and likelihood kernels
# ---------------------------------------------------------------------------

class _PairSet:
    def __init__(self, data, weights):
        i, j, dist, tlag = data.locs.pairs_within(weights.xi_s, weights.xi_t)
        if i.shape[0] == 0:
            raise NoPairsError(
                f"no location pair lies within the cut-off (xi_s={weights.xi_s}"
                + (f", xi_t={weights.xi_t}" if weights.xi_t is not None else "")
                + ")"
            )
        self.i = i
        self.j = j
        self.dist = dist
        self.tlag = np.zeros_like(dist) if tlag is None else tlag
        self.yi = data.counts[i]
        self.yj = data.counts[j]

    @property
    def n_pairs(self):
        return self.i.shape[0]


def _pair_rates(data, pv, t):
    lam = t * np.exp(data.covariates @ pv.beta)
    return lam


def _poisson_pair_loglik(pairs, li, lj, rho, ctrl):
    if np.any(np.abs(rho) > RHO_MAX):
        return -math.inf
    vals, status = _joint_pmf_batch(
        pairs.yi, pairs.yj, li, lj, rho, ctrl.rel_tol, ctrl.abs_tol, ctrl.max_terms
    )
    if np.any(status != STATUS_OK) or np.any(vals <= 0.0):
        return -math.inf
    return float(np.sum(np.log(vals)))


def _gaussian_pair_loglik(yi, yj, li, lj, r):
    one = 1.0 - r * r
    if np.any(one <= 0.0):
        return -math.inf
    zi = (yi - li) / np.sqrt(li)
    zj = (yj - lj) / np.sqrt(lj)
    quad = (zi * zi - 2.0 * r * zi * zj + zj * zj) / one
    ll = -_LOG_2PI - 0.5 * (np.log(li * lj * one) + quad)
    return float(np.sum(ll))


def _log_poisson_pmf_vec(y, lam):
    return y * np.log(lam) - lam - sp_special.gammaln(y + 1.0)


def _zip_pair_loglik(pairs, li, lj, rho_n, rho_b, theta, ctrl):
    if np.any(np.abs(rho_n) > RHO_MAX) or np.any(np.abs(rho_b) >= 1.0):
        return -math.inf
    pn, status = _joint_pmf_batch(
        pairs.yi, pairs.yj, li, lj, rho_n, ctrl.rel_tol, ctrl.abs_tol, ctrl.max_terms
    )
    if np.any(status != STATUS_OK):
        return -math.inf
    p1 = normal_cdf(-theta)
    p11 = np.where(
        rho_b == 0.0, p1 * p1, bivariate_normal_cdf(-theta, -theta, rho_b)
    )
    p10 = np.maximum(p1 - p11, 0.0)  # equals p01 (the mask mean is common)
    p01 = p10
    p00 = np.maximum(1.0 - 2.0 * p1 + p11, 0.0)
    p = p11 * pn
    zi = pairs.yi == 0
    zj = pairs.yj == 0
    pm_i = np.exp(_log_poisson_pmf_vec(pairs.yi, li))
    pm_j = np.exp(_log_poisson_pmf_vec(pairs.yj, lj))
    only_i = (~zi) & zj
    only_j = zi & (~zj)
    both = zi & zj
    p = p + np.where(only_i, p10 * pm_i, 0.0)
    p = p + np.where(only_j, p01 * pm_j, 0.0)
    p = p + np.where(both, p10 * np.exp(-li) + p01 * np.exp(-lj) + p00, 0.0)
    if np.any(p <= 0.0):
        return -math.inf
    return float(np.sum(np.log(p)))


def _objective_fn(kind, data, pairs, family, t, ctrl):
    """Closure evaluating the chosen log-likelihood kernel at a
    ParameterVector; invalid parameter regions return -inf."""

    stationary = data.covariates.shape[1] == 1

    def fn(pv):
        lam = _pair_rates(data, pv, t)
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
            return -math.inf
        li = lam[pairs.i]
        lj = lam[pairs.j]
        corr = _corr_from_params(pv, family)
        rho = np.asarray(
            underlying_from_distance(corr, pairs.dist, pairs.tlag), dtype=float
        )
        if kind == "poisson":
            return _poisson_pair_loglik(pairs, li, lj, rho, ctrl)
        if kind == "gaussian":
            if np.any(np.abs(rho) > RHO_MAX):
                return -math.inf
            if stationary:
                r = rho_poisson_stationary(rho, lam[0])
            else:
                r = np.zeros_like(rho)
                nz = rho != 0.0
                r[nz] = rho_poisson_nonstationary_batch(rho[nz], li[nz], lj[nz], ctrl)
            return _gaussian_pair_loglik(pairs.yi, pairs.yj, li, lj, r)
        if kind == "zip":
            corr_b = CorrelationModel(
                family, pv.alpha, pv.nugget_b or 0.0, pv.alpha_t
            )
            rho_b = np.asarray(
                underlying_from_distance(corr_b, pairs.dist, pairs.tlag), dtype=float
            )
            return _zip_pair_loglik(pairs, li, lj, rho, rho_b, pv.theta, ctrl)
        raise ValueError(f"unknown kernel {kind!r}")

    return fn


def _gaussian_ml_fn(data, family, t, ctrl):
    dist = data.locs.distance_matrix()
    tlag = data.locs.time_lag_matrix()
    y = data.counts.astype(float)
    n = y.shape[0]

    def fn(pv):
        lam = _pair_rates(data, pv, t)
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
            return -math.inf
        corr = _corr_from_params(pv, family)
        rho_n = count_correlation_matrix(corr, lam, dist, tlag, ctrl)
        np.fill_diagonal(rho_n, 1.0)
        cov = np.sqrt(np.outer(lam, lam)) * rho_n
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            return -math.inf
        resid = y - lam
        u = solve_triangular(chol, resid, lower=True, check_finite=False)
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
        return -0.5 * (n * _LOG_2PI + logdet + float(u @ u))

    return fn


# ---------------------------------------------------------------------------
# public objective and fitters
# ---------------------------------------------------------------------------

def wpl_objective(params, data, weights, family="gw4", kind="poisson", t=1.0, ctrl=None):
    """Weighted pairwise log-likelihood at ``params``.

    ``kind`` selects the pair kernel: 'poisson' (exact joint count pmf),
    'gaussian' (misspecified bivariate normal) or 'zip'.  Pairs outside the
    cut-off are never evaluated; raises ``NoPairsError`` when none qualify.
    """
    ctrl = ctrl or DEFAULT_CONTROL
    pairs = _PairSet(data, weights)
    return _objective_fn(kind, data, pairs, family, t, ctrl)(params)


def _maximize(fn, x0, opt):
    """Nelder-Mead with restarts from the incumbent; stops restarting once
    an extra pass no longer improves the objective materially."""
    best_x = np.asarray(x0, dtype=float)
    best_f = fn_neg_guard(fn, best_x)
    total_evals = 0
    success = False
    remaining = opt.max_evals
    for attempt in range(opt.restarts + 1):
        if remaining <= 0:
            break
        res = sp_optimize.minimize(
            lambda x: -fn_neg_guard(fn, x),
            best_x,
            method="Nelder-Mead",
            options={
                "maxfev": remaining,
                "xatol": opt.xatol,
                "fatol": opt.fatol,
                "adaptive": len(best_x) >= 4,
            },
        )
        total_evals += res.nfev
        remaining = opt.max_evals - total_evals
        improved = -res.fun > best_f + 10.0 * opt.fatol
        if -res.fun > best_f:
            best_f = -res.fun
            best_x = res.x
        success = bool(res.success)
        if attempt > 0 and not improved:
            break
    return best_x, best_f, total_evals, success


def fn_neg_guard(fn, x):
    v = fn(x)
    if math.isnan(v):
        return -math.inf
    return v


def _run_fit(kind, data, weights, init, config, method_name):
    config = config or FitConfig()
    ctrl = config.control()
    if data.n_obs < 30:
        logger.warning("fitting on %d observations; below ~30 the WPL is fragile", data.n_obs)
    pairs = _PairSet(data, weights)
    if init is None:
        init = default_init(data, config.family, method_name, config.t, config.fixed)
    packing = _Packing(init, config.family, method_name, config.fixed)
    fn_nat = _objective_fn(kind, data, pairs, config.family, config.t, ctrl)
    fn = lambda x: fn_nat(packing.unpack(x))
    x0 = packing.pack(init)
    if not math.isfinite(fn(x0)):
        raise NonConvergenceError(
            f"{method_name}: objective not finite at the initial point"
        )
    x, f, nev, success = _maximize(fn, x0, config.optimizer)
    estimate = packing.unpack(x)
    result = FitResult(
        estimate=estimate,
        objective=f,
        n_pairs_used=int(pairs.n_pairs),
        converged=success,
        iterations=nev,
        method=method_name,
        family=config.family,
        t=config.t,
    )
    if not success:
        logger.warning("%s did not meet convergence tolerances; best point returned", method_name)
    return result


def fit_poisson_wpl(data, weights, init=None, config=None):
    """Maximum weighted pairwise likelihood under the exact joint count pmf."""
    return _run_fit("poisson", data, weights, init, config, "poisson_wpl")


def fit_gaussian_wpl(data, weights, init=None, config=None):
    """Pairwise likelihood under Gaussian misspecification: bivariate normal
    kernels with mean and variance lambda(s) and the count-field correlation."""
    return _run_fit("gaussian", data, weights, init, config, "gaussian_wpl")


def fit_gaussian_ml(data, init=None, config=None, weights=None):
    """Misspecified full Gaussian maximum likelihood (dense factorization;
    guarded at 5000 observations).  ``weights`` is accepted for interface
    symmetry and ignored."""
    if data.n_obs > 5000:
        raise DataError("gaussian_ml is limited to 5000 observations (dense Cholesky)")
    config = config or FitConfig()
    ctrl = config.control()
    if init is None:
        init = default_init(data, config.family, "gaussian_ml", config.t, config.fixed)
    packing = _Packing(init, config.family, "gaussian_ml", config.fixed)
    fn_nat = _gaussian_ml_fn(data, config.family, config.t, ctrl)
    fn = lambda x: fn_nat(packing.unpack(x))
    x0 = packing.pack(init)
    if not math.isfinite(fn(x0)):
        raise NonConvergenceError("gaussian_ml: objective not finite at the initial point")
    x, f, nev, success = _maximize(fn, x0, config.optimizer)
    return FitResult(
        estimate=packing.unpack(x),
        objective=f,
        n_pairs_used=data.n_obs * (data.n_obs - 1) // 2,
        converged=success,
        iterations=nev,
        method="gaussian_ml",
        family=config.family,
        t=config.t,
    )


def fit_zip_wpl(data, weights, init=None, config=None):
    """Maximum weighted pairwise likelihood for the zero-inflated field
    (regression coefficients, mask mean theta, shared range, per-layer
    nuggets)."""
    if config is None:
        config = FitConfig(fixed=())
    if init is None:
        init = default_init(data, config.family, "zip_wpl", config.t, config.fixed)
    return _run_fit("zip", data, weights, init, config, "zip_wpl")


_FITTERS = {
    "poisson_wpl": fit_poisson_wpl,
    "gaussian_wpl": fit_gaussian_wpl,
    "gaussian_ml": lambda data, weights, init=None, config=None: fit_gaussian_ml(
        data, init=init, config=config
    ),
    "zip_wpl": fit_zip_wpl,
}


def fit_by_method(method, data, weights, init=None, config=None):
    try:
        fitter = _FITTERS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(_FITTERS)}")
    return fitter(data, weights, init=init, config=config)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _poisson_irls(x, y, t, iters=50):
    """Independence Poisson regression (Newton scoring)."""
    beta = np.zeros(x.shape[1])
    beta[0] = math.log(max(float(np.mean(y)) / t, 1e-8))
    for _ in range(iters):
        mu = t * np.exp(np.clip(x @ beta, -30.0, 30.0))
        grad = x.T @ (y - mu)
        hess = x.T @ (mu[:, None] * x)
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        beta = beta + step
        if np.max(np.abs(step)) < 1e-10:
            break
    return beta


def default_init(data, family="gw4", method="poisson_wpl", t=1.0, fixed=("nugget",)):
    """Cheap consistent starting point: independence regression for beta,
    the lower quartile of pairwise distances for the range, 0.1 for nuggets
    that will be estimated (0 when held fixed) and a zero-excess probit for
    the mask mean."""
    y = data.counts.astype(float)
    beta = _poisson_irls(data.covariates, y, t)
    dist = data.locs.distance_matrix()
    iu = np.triu_indices(len(data.locs), k=1)
    alpha = float(np.percentile(dist[iu], 25.0))
    if alpha <= 0.0:
        alpha = float(np.max(dist)) or 1.0
    kw = {}
    if family == "gw4_spacetime":
        tl = np.abs(data.locs.time_lag_matrix()[iu])
        pos = tl[tl > 0]
        kw["alpha_t"] = float(np.percentile(pos, 25.0)) if pos.size else 1.0
    if method == "zip_wpl":
        share0 = float(np.mean(y == 0))
        lam0 = t * np.exp(np.clip(data.covariates @ beta, -30.0, 30.0))
        implied0 = float(np.mean(np.exp(-lam0)))
        excess = min(max(share0 - implied0, 0.01), 0.95)
        kw["theta"] = float(normal_quantile(excess))
        kw["nugget_b"] = 0.0 if "nugget_b" in fixed else 0.1
        # the independence regression sees the masked mean (1-p) lambda
        beta = beta.copy()
        beta[0] -= math.log(max(1.0 - excess, 1e-6))
    nugget = 0.0 if "nugget" in fixed else 0.1
    return ParameterVector(beta=beta, alpha=alpha, nugget=nugget, **kw)


# ---------------------------------------------------------------------------
# standard errors
# ---------------------------------------------------------------------------

def bootstrap_std_errors(fit, data, weights, B, seed, config=None):
    """Parametric bootstrap: simulate B datasets at the fitted parameters on
    the same locations, refit each, and return per-parameter standard
    deviations.  Replicates that fail to converge are dropped; more than 10%
    failures aborts."""
    if B < 2:
        raise ValueError("bootstrap needs at least 2 replicates")
    if not fit.converged:
        raise NonConvergenceError("refusing to bootstrap a non-converged fit")
    from .simulate import simulate_poisson_field, simulate_zip_field

    seed = SeedSpec.coerce(seed)
    config = config or FitConfig(
        family=fit.family, t=fit.t, fixed=("nugget",) if fit.method != "zip_wpl" else ()
    )
    model = fit.field_model(data.covariates)
    estimates = []
    failures = 0
    for b in range(B):
        child = seed.child("bootstrap", b)
        if isinstance(model, ZipFieldModel):
            y = simulate_zip_field(model, data.locs, child)
        else:
            y = simulate_poisson_field(model, data.locs, child)
        boot_data = FieldData(data.locs, y, data.covariates)
        try:
            refit = fit_by_method(fit.method, boot_data, weights, init=fit.estimate, config=config)
            if refit.converged:
                estimates.append(refit)
            else:
                failures += 1
        except (NonConvergenceError, NoPairsError):
            failures += 1
        if failures > 0.1 * B:
            raise NonConvergenceError(
                f"bootstrap aborted: {failures} of {b + 1} replicates failed to converge"
            )
    if len(estimates) < 2:
        raise NonConvergenceError("bootstrap produced fewer than 2 usable replicates")
    names, rows = _estimates_matrix(estimates)
    se = {name: float(np.std(col, ddof=1)) for name, col in zip(names, rows.T)}
    return se


def _estimates_matrix(fits):
    names = []
    first = fits[0].estimate
    names.extend(f"beta{i}" for i in range(first.beta.shape[0]))
    for s in ("alpha", "alpha_t", "nugget", "theta", "nugget_b"):
        if getattr(first, s) is not None:
            names.append(s)
    rows = np.empty((len(fits), len(names)))
    for r, f in enumerate(fits):
        pv = f.estimate
        vals = list(pv.beta)
        for s in ("alpha", "alpha_t", "nugget", "theta", "nugget_b"):
            v = getattr(pv, s)
            if v is not None:
                vals.append(v)
        rows[r] = vals
    return names, rows


def godambe_std_errors(fit, data, weights, config=None, eps=1e-4):
    """Numerical-derivative Godambe sandwich H J^-1 H (expert use only).

    H is a finite-difference Hessian of the pairwise objective; J sums
    per-pair score outer products, which neglects inter-pair dependence, so
    these standard errors carry no accuracy guarantee.  The supported
    estimator is :func:`bootstrap_std_errors`.
    """
    config = config or FitConfig(family=fit.family, t=fit.t)
    ctrl = config.control()
    kind = {"poisson_wpl": "poisson", "gaussian_wpl": "gaussian", "zip_wpl": "zip"}.get(fit.method)
    if kind is None:
        raise ValueError("sandwich standard errors require a pairwise method")
    pairs = _PairSet(data, weights)
    packing = _Packing(fit.estimate, config.family, fit.method, config.fixed)
    x0 = packing.pack(fit.estimate)
    k = x0.shape[0]

    def per_pair_logs(x):
        pv = packing.unpack(x)
        lam = _pair_rates(data, pv, config.t)
        li, lj = lam[pairs.i], lam[pairs.j]
        corr = _corr_from_params(pv, config.family)
        rho = np.asarray(underlying_from_distance(corr, pairs.dist, pairs.tlag), dtype=float)
        if kind == "poisson":
            vals, status = _joint_pmf_batch(
                pairs.yi, pairs.yj, li, lj, rho, ctrl.rel_tol, ctrl.abs_tol, ctrl.max_terms
            )
            return np.log(np.maximum(vals, 1e-300))
        raise NotImplementedError("per-pair scores implemented for the count kernel only")

    def total(x):
        return float(np.sum(per_pair_logs(x)))

    hess = np.empty((k, k))
    f0 = total(x0)
    for a in range(k):
        for b in range(a, k):
            ea = np.zeros(k)
            eb = np.zeros(k)
            ea[a] = eps
            eb[b] = eps
            fpp = total(x0 + ea + eb)
            fpm = total(x0 + ea - eb)
            fmp = total(x0 - ea + eb)
            fmm = total(x0 - ea - eb)
            hess[a, b] = hess[b, a] = (fpp - fpm - fmp + fmm) / (4.0 * eps * eps)
    scores = np.empty((pairs.n_pairs, k))
    for a in range(k):
        ea = np.zeros(k)
        ea[a] = eps
        scores[:, a] = (per_pair_logs(x0 + ea) - per_pair_logs(x0 - ea)) / (2.0 * eps)
    h_mat = -hess
    j_mat = scores.T @ scores
    g_inv = np.linalg.inv(h_mat @ np.linalg.solve(j_mat, h_mat))
    se_packed = np.sqrt(np.maximum(np.diag(g_inv), 0.0))
    # delta method back to natural scale through the transform jacobian
    jac = _transform_jacobian(packing, x0)
    return {name: float(se_packed[i] * jac[i]) for i, name in enumerate(packing.names)}


def _transform_jacobian(packing, x0):
    jac = np.ones_like(x0)
    for i, name in enumerate(packing.names):
        if name in ("alpha", "alpha_t"):
            jac[i] = math.exp(x0[i])
        elif name in ("nugget", "nugget_b"):
            e = _expit(x0[i])
            jac[i] = e * (1.0 - e)
    return jac
