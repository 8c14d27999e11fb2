"""Underlying correlation families and model-level correlation functions.

The latent standard Gaussian field drives every construction in the
package; its correlation rho(h) ("underlying correlation") comes from one
of three parametric families:

* ``gw4``          compactly supported (1 - r/alpha)^4_+,
* ``exponential``  exp(-r/alpha),
* ``gw4_spacetime`` separable (1 - r/alpha)^4_+ (1 - |t|/alpha_t)^4_+.

An optional nugget mixes in a discontinuity at the origin:
rho*(h) = (1 - tau^2) rho(h) + tau^2 1{h = 0}.

On top of the underlying correlation this module evaluates the correlation
functions of the derived fields: the renewal-count field (closed Bessel
form when the rate is constant, incomplete-gamma series otherwise), the
hierarchical log-Gaussian mixed Poisson, the Gaussian-copula Poisson, and
the zero-inflated count field.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy import special as sp_special
from scipy import stats as sp_stats

from .errors import SeriesTruncationError
from .specfun import DEFAULT_CONTROL, bivariate_normal_cdf, normal_cdf
from .bivariate import _advance_gamma

__all__ = [
    "FAMILIES",
    "CorrelationModel",
    "Lag",
    "LgParams",
    "rho_underlying",
    "underlying_from_distance",
    "rho_poisson_stationary",
    "rho_poisson_nonstationary",
    "rho_poisson_nonstationary_batch",
    "rho_poisson_lg",
    "lg_nugget",
    "rho_poisson_gc",
    "rho_zip",
]

FAMILIES = ("gw4", "exponential", "gw4_spacetime")


@dataclass(frozen=True)
class CorrelationModel:
    """Parametric underlying correlation: family, spatial range ``alpha``,
    nugget ``tau^2`` in [0, 1) and, for the space-time family, temporal
    range ``alpha_t``."""

    family: str
    alpha: float
    nugget: float = 0.0
    alpha_t: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown correlation family {self.family!r}; choose from {FAMILIES}")
        if not self.alpha > 0.0:
            raise ValueError("spatial range alpha must be positive")
        if not 0.0 <= self.nugget < 1.0:
            raise ValueError("nugget tau^2 must lie in [0, 1)")
        if self.family == "gw4_spacetime":
            if self.alpha_t is None or not self.alpha_t > 0.0:
                raise ValueError("space-time family requires a positive alpha_t")
        elif self.alpha_t is not None:
            raise ValueError(f"alpha_t is only meaningful for the space-time family, got {self.family!r}")

    def to_dict(self):
        d = {"family": self.family, "alpha": self.alpha, "nugget": self.nugget}
        if self.alpha_t is not None:
            d["alpha_t"] = self.alpha_t
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            family=d["family"],
            alpha=float(d["alpha"]),
            nugget=float(d.get("nugget", 0.0)),
            alpha_t=(float(d["alpha_t"]) if d.get("alpha_t") is not None else None),
        )


@dataclass(frozen=True)
class Lag:
    """Spatial separation vector with an optional temporal separation."""

    h: np.ndarray
    t_lag: float = 0.0

    def __post_init__(self):
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        if not np.all(np.isfinite(h)) or not math.isfinite(self.t_lag):
            raise ValueError("lag components must be finite")
        object.__setattr__(self, "h", h)

    @property
    def distance(self):
        return float(np.linalg.norm(self.h))


@dataclass(frozen=True)
class LgParams:
    """Parameters (mu, sigma^2) of the log-Gaussian mixing field
    Z(s) = exp(mu + sigma G(s))."""

    mu: float
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0.0:
            raise ValueError("sigma2 must be positive")

    @property
    def mean(self):
        """E(Y) = exp(mu + sigma^2 / 2) of the mixed Poisson field."""
        return math.exp(self.mu + 0.5 * self.sigma2)


def underlying_from_distance(model, r, t_lag=0.0):
    """Underlying correlation at spatial distance(s) ``r`` and temporal
    lag(s) ``t_lag``, nugget mixing included.  Vectorized."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t_lag, dtype=float)
    if np.any(r < 0.0):
        raise ValueError("distances must be nonnegative")
    if model.family == "gw4":
        rho = np.maximum(0.0, 1.0 - r / model.alpha) ** 4
    elif model.family == "exponential":
        rho = np.exp(-r / model.alpha)
    else:  # gw4_spacetime
        rho = (
            np.maximum(0.0, 1.0 - r / model.alpha) ** 4
            * np.maximum(0.0, 1.0 - np.abs(t) / model.alpha_t) ** 4
        )
    if model.nugget > 0.0:
        at_origin = (r == 0.0) & (np.asarray(t) == 0.0)
        rho = (1.0 - model.nugget) * rho + model.nugget * at_origin
    if np.ndim(r) == 0 and np.ndim(t_lag) == 0:
        return float(rho)
    return rho


def rho_underlying(model, lag):
    """Underlying correlation of a :class:`Lag` under ``model``."""
    return underlying_from_distance(model, lag.distance, lag.t_lag)


# ---------------------------------------------------------------------------
# count-field correlation
# ---------------------------------------------------------------------------

def rho_poisson_stationary(rho, lam):
    """Correlation of two renewal counts sharing rate ``lam``:

        rho_N = rho^2 [1 - e^{-z} (I_0(z) + I_1(z))],   z = 2 lam / (1 - rho^2).

    Scaled Bessel evaluation keeps this finite for any rate; the removable
    limit 1 is returned at |rho| = 1 (zero lag).  Vectorized.
    """
    r = np.asarray(rho, dtype=float)
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(np.abs(r) > 1.0):
        raise ValueError("correlation must lie in [-1, 1]")
    if np.any(lam_arr <= 0.0):
        raise ValueError("rate must be positive")
    q = r * r
    one = 1.0 - q
    at_limit = one <= 0.0
    safe = np.where(at_limit, 1.0, one)
    z = 2.0 * lam_arr / safe
    out = q * (1.0 - (sp_special.ive(0, z) + sp_special.ive(1, z)))
    out = np.where(at_limit, 1.0, out)
    if np.ndim(rho) == 0 and np.ndim(lam) == 0:
        return float(out)
    return out


@njit(cache=True)
def _rho_ns_core(rho, li, lj, rel_tol, abs_tol, max_terms):
    q = rho * rho
    if q == 0.0:
        return 0.0, True
    if q >= 1.0:
        return 1.0, True  # zero-lag continuity limit
    u = li / (1.0 - q)
    w = lj / (1.0 - q)
    lu = math.log(u)
    lw = math.log(w)
    pu = -math.expm1(-u)  # P(1, u)
    pw = -math.expm1(-w)
    lpu = lu - u  # log Poi(1; u)
    lpw = lw - w
    s = 0.0
    small = 0
    ok = False
    for r in range(max_terms):
        term = pu * pw
        s += term
        if term <= max(abs_tol, rel_tol * s):
            small += 1
            if small >= 3:
                ok = True
                break
        else:
            small = 0
        pu, lpu = _advance_gamma(pu, lpu, r + 1.0, u, lu)
        pw, lpw = _advance_gamma(pw, lpw, r + 1.0, w, lw)
        if pu <= 0.0 or pw <= 0.0:
            ok = True
            break
    return q * (1.0 - q) / math.sqrt(li * lj) * s, ok


@njit(cache=True)
def _rho_ns_batch(rhos, lis, ljs, rel_tol, abs_tol, max_terms):
    out = np.empty(rhos.shape[0])
    ok = True
    for i in range(rhos.shape[0]):
        out[i], oki = _rho_ns_core(rhos[i], lis[i], ljs[i], rel_tol, abs_tol, max_terms)
        ok = ok and oki
    return out, ok


def rho_poisson_nonstationary(rho, lambda_i, lambda_j, ctrl=None):
    """Correlation of two renewal counts with distinct rates:

        rho_N = rho^2 (1-rho^2) / sqrt(li lj)
                * sum_{r>=0} P(r+1, li/(1-rho^2)) P(r+1, lj/(1-rho^2)).

    Reduces to :func:`rho_poisson_stationary` when the rates agree.
    """
    ctrl = ctrl or DEFAULT_CONTROL
    if not abs(rho) < 1.0:
        if abs(rho) == 1.0:
            return 1.0
        raise ValueError("correlation must lie in [-1, 1]")
    if not (lambda_i > 0.0 and lambda_j > 0.0):
        raise ValueError("rates must be positive")
    val, ok = _rho_ns_core(
        float(rho), float(lambda_i), float(lambda_j), ctrl.rel_tol, ctrl.abs_tol, ctrl.max_terms
    )
    if not ok:
        raise SeriesTruncationError(
            f"count-correlation series did not converge within {ctrl.max_terms} terms"
        )
    return val


def rho_poisson_nonstationary_batch(rhos, lambda_i, lambda_j, ctrl=None):
    """Vectorized Theorem-series count correlation over aligned arrays."""
    ctrl = ctrl or DEFAULT_CONTROL
    rhos, lis, ljs = np.broadcast_arrays(
        np.asarray(rhos, dtype=float),
        np.asarray(lambda_i, dtype=float),
        np.asarray(lambda_j, dtype=float),
    )
    out, ok = _rho_ns_batch(
        rhos.ravel().astype(float),
        lis.ravel().astype(float),
        ljs.ravel().astype(float),
        ctrl.rel_tol,
        ctrl.abs_tol,
        ctrl.max_terms,
    )
    if not ok:
        raise SeriesTruncationError(
            f"count-correlation series did not converge within {ctrl.max_terms} terms"
        )
    return out.reshape(rhos.shape)


# ---------------------------------------------------------------------------
# benchmark models: log-Gaussian mixture and Gaussian copula
# ---------------------------------------------------------------------------

def rho_poisson_lg(rho, params, zero_lag=False):
    """Correlation of the hierarchical Poisson log-Gaussian field:

        rho_Y(h) = (e^{sigma^2 rho(h)} - 1) / (e^{sigma^2} - 1 + 1/E(Y)),

    discontinuous at the origin (returns 1 exactly when ``zero_lag``)."""
    if zero_lag:
        return 1.0
    mean = params.mean
    return math.expm1(params.sigma2 * rho) / (math.expm1(params.sigma2) + 1.0 / mean)


def lg_nugget(params):
    """Size of the origin discontinuity of the log-Gaussian model:
    E(Y)^-1 / (E(Y)^-1 + e^{sigma^2} - 1)."""
    inv = 1.0 / params.mean
    return inv / (inv + math.expm1(params.sigma2))


_GH_CACHE = {}


def _gauss_hermite(n):
    if n not in _GH_CACHE:
        _GH_CACHE[n] = np.polynomial.hermite.hermgauss(n)
    return _GH_CACHE[n]


def rho_poisson_gc(rho, lam, quad_nodes=96):
    """Correlation of the Gaussian-copula Poisson field,

        rho_C = ( E[ F^{-1}(Phi(Z_i)) F^{-1}(Phi(Z_j)) ] - lam^2 ) / lam,

    with (Z_i, Z_j) standard bivariate Gaussian with correlation ``rho``.

    The quantile transform makes the integrand a staircase, on which
    Gauss-Hermite rules converge too slowly, so the cross moment is summed
    exactly over the count support instead:
    E[XY] = sum_{n,m >= 1} Pr(X >= n, Y >= m), with each joint survival
    probability a Gaussian orthant probability at the copula thresholds.
    ``quad_nodes`` controls the quadrature inside the bivariate normal cdf.
    """
    if quad_nodes < 20:
        raise ValueError("quad_nodes must be at least 20")
    if not abs(rho) <= 1.0:
        raise ValueError("correlation must lie in [-1, 1]")
    if not lam > 0.0:
        raise ValueError("rate must be positive")
    if rho == 0.0:
        return 0.0
    if rho == 1.0:
        return 1.0
    cap = int(sp_stats.poisson.ppf(1.0 - 1e-13, lam)) + 5
    cdf = sp_stats.poisson.cdf(np.arange(cap), lam)  # F(n-1) for n = 1..cap
    cdf = np.clip(cdf, 1e-300, 1.0 - 1e-16)
    b = sp_special.ndtri(cdf)
    orthant = bivariate_normal_cdf(-b[:, None], -b[None, :], rho, quad_nodes)
    exy = float(np.sum(orthant))
    return float((exy - lam * lam) / lam)


# ---------------------------------------------------------------------------
# zero-inflated count field
# ---------------------------------------------------------------------------

def rho_zip(rho1, rho2, theta, lambda_i, lambda_j, ctrl=None):
    """Correlation of the zero-inflated field Y = B N.

    With the mask and count layers independent,
    E(Y_i Y_j) = E(B_i B_j) E(N_i N_j), where E(B_i B_j) is the Gaussian
    orthant probability at (-theta, -theta) under correlation ``rho1`` and
    E(N_i N_j) follows from the count correlation under ``rho2``;
    Var(Y) = E(Y)[1 + (p/(1-p)) E(Y)] with p = Phi(theta).
    """
    if not (abs(rho1) < 1.0 and abs(rho2) < 1.0):
        raise ValueError("underlying correlations must satisfy |rho| < 1")
    p = normal_cdf(theta)
    if p >= 1.0:
        raise ValueError("mask mean theta gives a degenerate all-zero field")
    e_bb = (
        bivariate_normal_cdf(-theta, -theta, rho1)
        if rho1 != 0.0
        else (1.0 - p) ** 2
    )
    rn = rho_poisson_nonstationary(rho2, lambda_i, lambda_j, ctrl)
    e_nn = math.sqrt(lambda_i * lambda_j) * rn + lambda_i * lambda_j
    mean_i = (1.0 - p) * lambda_i
    mean_j = (1.0 - p) * lambda_j
    var_i = mean_i * (1.0 + p * lambda_i)
    var_j = mean_j * (1.0 + p * lambda_j)
    cov = e_bb * e_nn - mean_i * mean_j
    return cov / math.sqrt(var_i * var_j)
