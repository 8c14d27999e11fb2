"""Exact simulation of the random fields.

The count field is simulated from its defining construction, not from an
approximation: independent copies of the exponential field act as
inter-arrival times and each site's count is the number of partial sums
that fit inside the unit horizon.  All copies share one Cholesky factor of
the underlying correlation; each copy draws from its own derived RNG
stream, so output is reproducible and independent of batching.
"""

import numpy as np

from .correlation import underlying_from_distance
from .errors import NumericalError
from .locations import perturbed_grid, space_time_product, uniform_sites  # noqa: F401 (re-export)
from .models import cholesky_psd
from .rng import SeedSpec

__all__ = [
    "simulate_gaussian",
    "simulate_exponential",
    "simulate_poisson_field",
    "simulate_zip_field",
    "perturbed_grid",
    "uniform_sites",
    "space_time_product",
]


def _underlying_factor(locs, corr):
    dist = locs.distance_matrix()
    tlag = locs.time_lag_matrix()
    rho = np.asarray(
        underlying_from_distance(corr, dist, 0.0 if tlag is None else tlag), dtype=float
    )
    np.fill_diagonal(rho, 1.0)
    chol, _ = cholesky_psd(rho)
    return chol


def simulate_gaussian(locs, corr, seed, reps=None):
    """Zero-mean unit-variance Gaussian draws with correlation ``corr``.

    Returns a vector of length n, or an (reps, n) matrix when ``reps`` is
    given (replicates are i.i.d.).
    """
    seed = SeedSpec.coerce(seed)
    chol = _underlying_factor(locs, corr)
    rng = seed.generator("gaussian")
    if reps is None:
        return chol @ rng.standard_normal(len(locs))
    return rng.standard_normal((reps, len(locs))) @ chol.T


def simulate_exponential(locs, lam, corr, seed, reps=None):
    """Exponential field W(s) = (G_1^2(s) + G_2^2(s)) / (2 lam(s)), marginally
    Exp(lam(s)) with field correlation rho^2."""
    seed = SeedSpec.coerce(seed)
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (len(locs),))
    if np.any(lam <= 0.0):
        raise ValueError("rates must be positive")
    chol = _underlying_factor(locs, corr)
    rng = seed.generator("exponential")
    if reps is None:
        g1 = chol @ rng.standard_normal(len(locs))
        g2 = chol @ rng.standard_normal(len(locs))
        return (g1 * g1 + g2 * g2) / (2.0 * lam)
    g1 = rng.standard_normal((reps, len(locs))) @ chol.T
    g2 = rng.standard_normal((reps, len(locs))) @ chol.T
    return (g1 * g1 + g2 * g2) / (2.0 * lam)


def _renewal_counts(chol, lam, seed, reps):
    """Accumulate exponential-field copies until every site's partial sum
    exceeds the unit horizon; the count is the number of sums inside it."""
    n = lam.shape[0]
    single = reps is None
    r = 1 if single else reps
    partial = np.zeros((r, n))
    counts = np.zeros((r, n), dtype=np.int64)
    max_copies = int(10.0 * float(np.max(lam))) + 200
    copy = 0
    while True:
        rng = seed.generator(copy)
        g1 = rng.standard_normal((r, n)) @ chol.T
        g2 = rng.standard_normal((r, n)) @ chol.T
        partial += (g1 * g1 + g2 * g2) / (2.0 * lam)
        active = partial <= 1.0
        counts += active
        if not active.any():
            return counts[0] if single else counts
        copy += 1
        if copy > max_copies:
            raise NumericalError(
                f"renewal simulation exceeded {max_copies} inter-arrival copies; "
                "the probability of a valid path needing this many is < 1e-12"
            )


def simulate_poisson_field(model, locs, seed, reps=None):
    """Counts of the renewal construction: marginally Poisson(t lambda(s)),
    cross-site dependence induced by the shared exponential-field copies."""
    seed = SeedSpec.coerce(seed)
    if model.n_sites != len(locs):
        raise ValueError("model is bound to a different number of sites")
    lam = model.rates()
    chol = _underlying_factor(locs, model.corr)
    return _renewal_counts(chol, lam, seed.child("count"), reps)


def simulate_zip_field(model, locs, seed, reps=None):
    """Zero-inflated counts Y = B N: the mask B thresholds a Gaussian layer
    with mean theta at zero, independently of the count layer N."""
    seed = SeedSpec.coerce(seed)
    counts = simulate_poisson_field(model.base, locs, seed.child("n_layer"), reps)
    chol = _underlying_factor(locs, model.corr_b)
    rng = seed.generator("b_layer")
    if reps is None:
        g = model.theta + chol @ rng.standard_normal(len(locs))
    else:
        g = model.theta + rng.standard_normal((reps, len(locs))) @ chol.T
    return np.where(g < 0.0, counts, 0)
