"""Optimal linear prediction and cross-validation utilities.

The exact conditional expectation of a count at an unobserved site is not
available, so prediction uses the best linear predictor built from the
field's mean vector and covariance matrix:

    N_hat(s0) = mean(s0) + c' Sigma^{-1} (y - mean),
    MSE(s0)   = var(s0)  - c' Sigma^{-1} c.

Predictions are real-valued by design (the linear predictor guarantees
neither positivity nor discreteness); an optional clamp to [0, inf) exists
for reporting convenience.  Parameters are plugged in from a fit; no
estimation uncertainty is propagated.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .errors import DataError, NoPairsError, NonConvergenceError
from .estimate import fit_by_method
from .models import build_covariance, build_cross_covariance, cholesky_psd
from .rng import SeedSpec

__all__ = ["PredictionResult", "linear_predict", "CrossvalResult", "crossval_rmse"]

logger = logging.getLogger(__name__)


@dataclass
class PredictionResult:
    predicted: np.ndarray
    mse: np.ndarray


def linear_predict(
    model,
    data,
    targets,
    target_covariates=None,
    clamp_nonnegative=False,
    ctrl=None,
):
    """Best linear prediction of the field at ``targets`` given ``data``.

    One Cholesky factorization of the observed covariance is shared across
    all targets.  Targets may coincide with observed sites (the predictor
    then interpolates exactly when the model carries no nugget).  Tiny
    negative MSEs from rounding are clamped to zero with a logged warning;
    anything beyond -1e-9 raises.
    """
    from .models import ZipFieldModel

    y = np.asarray(data.counts, dtype=float)
    cov = build_covariance(model, data.locs, ctrl=ctrl, ensure_pd=False)
    chol, _ = cholesky_psd(cov)
    c, mean0, var0 = build_cross_covariance(model, data.locs, targets, target_covariates, ctrl)
    mean = model.means() if isinstance(model, ZipFieldModel) else model.rates()
    solved = cho_solve((chol, True), c, check_finite=False)
    predicted = mean0 + solved.T @ (y - mean)
    mse = var0 - np.einsum("ij,ij->j", c, solved)
    bad = mse < -1e-9
    if np.any(bad):
        raise DataError(
            f"negative prediction MSE beyond rounding tolerance (min {mse.min():.3e}); "
            "covariance model inconsistent with targets"
        )
    if np.any(mse < 0.0):
        logger.warning("clamping %d slightly negative MSEs to 0", int(np.sum(mse < 0.0)))
        mse = np.maximum(mse, 0.0)
    if clamp_nonnegative:
        predicted = np.maximum(predicted, 0.0)
    return PredictionResult(predicted=predicted, mse=mse)


@dataclass
class CrossvalResult:
    rmse: np.ndarray
    mean_rmse: float
    n_failed: int


def crossval_rmse(
    data,
    weights,
    split=0.8,
    repeats=100,
    seed=0,
    method="poisson_wpl",
    config=None,
    init=None,
):
    """Repeated random-split cross-validation RMSE.

    Per repeat: hold out ``1 - split`` of the sites, refit on the training
    split, linearly predict the holdout, and record
    sqrt(mean((y - y_hat)^2)).  ``method`` may also be 'mean_baseline',
    which predicts the training-sample mean everywhere (no fit).
    Replicate-level fit failures are excluded and reported in the result.
    """
    if not 0.0 < split < 1.0:
        raise ValueError("split must lie strictly in (0, 1)")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    n = data.n_obs
    n_train = int(round(split * n))
    if n_train < 2 or n_train >= n:
        raise DataError(
            f"split {split} leaves {n - n_train} holdout / {n_train} training sites"
        )
    seed = SeedSpec.coerce(seed)
    rmses = []
    failed = 0
    for rep in range(repeats):
        rng = seed.generator("crossval", rep)
        perm = rng.permutation(n)
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train:])
        train = data.subset(train_idx)
        y_test = data.counts[test_idx].astype(float)
        if method == "mean_baseline":
            pred = np.full(test_idx.shape[0], float(np.mean(train.counts)))
        else:
            try:
                fit = fit_by_method(method, train, weights, init=init, config=config)
                model = fit.field_model(train.covariates)
                res = linear_predict(
                    model,
                    train,
                    data.locs.subset(test_idx),
                    target_covariates=data.covariates[test_idx],
                )
                pred = res.predicted
            except (NonConvergenceError, NoPairsError, np.linalg.LinAlgError) as exc:
                logger.warning("crossval repeat %d failed: %s", rep, exc)
                failed += 1
                continue
        rmses.append(float(np.sqrt(np.mean((y_test - pred) ** 2))))
    if not rmses:
        raise NonConvergenceError("every cross-validation repeat failed")
    arr = np.asarray(rmses)
    return CrossvalResult(rmse=arr, mean_rmse=float(arr.mean()), n_failed=failed)
