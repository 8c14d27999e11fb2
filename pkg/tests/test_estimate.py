"""Estimation: objective correctness, invariances, recovery, standard errors."""

import math

import numpy as np
import pytest
from scipy import optimize

from countfield.correlation import CorrelationModel
from countfield.errors import NonConvergenceError, NoPairsError
from countfield.estimate import (
    FieldData,
    FitConfig,
    OptimizerConfig,
    PairWeights,
    ParameterVector,
    bootstrap_std_errors,
    default_init,
    fit_gaussian_ml,
    fit_gaussian_wpl,
    fit_poisson_wpl,
    fit_zip_wpl,
    godambe_std_errors,
    wpl_objective,
)
from countfield.bivariate import poisson_marginal_pmf
from countfield.locations import LocationSet, perturbed_grid
from countfield.models import PoissonFieldModel
from countfield.simulate import simulate_poisson_field


def _intercept_data(locs, counts):
    return FieldData(locs, counts, np.ones((len(locs), 1)))


@pytest.fixture(scope="module")
def small_field():
    locs = perturbed_grid(10, 0.05, 0.015, seed=21)
    m = PoissonFieldModel.intercept_only(math.log(2.0), len(locs), CorrelationModel("gw4", 0.2))
    y = simulate_poisson_field(m, locs, 101)
    return _intercept_data(locs, y)


class TestValidation:
    def test_pair_weights(self):
        with pytest.raises(ValueError):
            PairWeights(0.0)
        with pytest.raises(ValueError):
            PairWeights(0.1, -1.0)

    def test_parameter_vector(self):
        with pytest.raises(ValueError):
            ParameterVector(np.array([0.0]), alpha=-1.0)
        with pytest.raises(ValueError):
            ParameterVector(np.array([0.0]), alpha=1.0, nugget=1.0)

    def test_counts_must_be_integers(self):
        locs = LocationSet(np.array([[0.0, 0.0], [0.1, 0.0]]))
        from countfield.errors import DataError

        with pytest.raises(DataError):
            FieldData(locs, np.array([1.5, 2.0]), np.ones((2, 1)))


class TestObjective:
    def test_no_pairs_error(self, small_field):
        with pytest.raises(NoPairsError):
            wpl_objective(
                ParameterVector(np.array([0.7]), 0.2),
                small_field,
                PairWeights(1e-6),
            )

    def test_independence_reduces_to_marginals(self):
        locs = LocationSet(np.array([[0.0, 0.0], [0.05, 0.0]]))
        data = _intercept_data(locs, np.array([3, 1]))
        pv = ParameterVector(np.array([math.log(2.0)]), alpha=1e-9)
        got = wpl_objective(pv, data, PairWeights(0.1))
        expect = math.log(poisson_marginal_pmf(3, 2.0)) + math.log(poisson_marginal_pmf(1, 2.0))
        assert got == pytest.approx(expect, rel=1e-12)

    def test_order_invariance(self, small_field):
        pv = ParameterVector(np.array([0.7]), 0.2)
        w = PairWeights(0.1)
        base = wpl_objective(pv, small_field, w)
        rng = np.random.default_rng(3)
        perm = rng.permutation(small_field.n_obs)
        shuffled = FieldData(
            small_field.locs.subset(perm),
            small_field.counts[perm],
            small_field.covariates[perm],
        )
        assert wpl_objective(pv, shuffled, w) == pytest.approx(base, rel=1e-12)

    def test_consistency_direction(self):
        # on average over replicates the objective prefers the truth
        locs = perturbed_grid(7, 0.05, 0.015, seed=31)
        corr = CorrelationModel("gw4", 0.2)
        m = PoissonFieldModel.intercept_only(math.log(2.0), len(locs), corr)
        truth = ParameterVector(np.array([math.log(2.0)]), 0.2)
        off = ParameterVector(np.array([math.log(2.0) + 0.5]), 0.35)
        w = PairWeights(0.1)
        diffs = []
        for rep in range(50):
            y = simulate_poisson_field(m, locs, (1000 + rep))
            data = _intercept_data(locs, y)
            diffs.append(
                wpl_objective(truth, data, w) - wpl_objective(off, data, w)
            )
        assert np.mean(diffs) > 0.0


class TestPoissonWplFit:
    def test_independent_data_recovers_marginal_mle(self):
        locs = perturbed_grid(8, 0.05, 0.015, seed=41)
        # alpha tiny: every pair is independent under the generating model
        m = PoissonFieldModel.intercept_only(math.log(2.0), len(locs), CorrelationModel("gw4", 1e-6))
        y = simulate_poisson_field(m, locs, 51)
        data = _intercept_data(locs, y)
        config = FitConfig(fixed=("alpha", "nugget"))
        init = ParameterVector(np.array([0.0]), alpha=1e-6)
        fit = fit_poisson_wpl(data, PairWeights(0.1), init=init, config=config)
        assert fit.estimate.beta[0] == pytest.approx(math.log(y.mean()), abs=1e-3)

    def test_reparameterization_invariance(self, small_field):
        w = PairWeights(0.1)
        fit = fit_poisson_wpl(small_field, w)
        # the reported natural-scale optimum reproduces the achieved objective
        again = wpl_objective(fit.estimate, small_field, w)
        assert again == pytest.approx(fit.objective, abs=1e-9)

    def test_recovery_on_one_replicate(self, small_field):
        fit = fit_poisson_wpl(small_field, PairWeights(0.1))
        assert fit.converged
        assert abs(fit.estimate.beta[0] - math.log(2.0)) < 0.25
        assert 0.05 < fit.estimate.alpha < 0.5


class TestGaussianFits:
    def test_gaussian_wpl_scalar_oracle(self):
        # independent data, intercept only, alpha fixed tiny: the pairwise
        # Gaussian objective is a 1-D function of beta; compare with a
        # direct scalar optimization of the same kernel
        locs = perturbed_grid(6, 0.05, 0.015, seed=61)
        m = PoissonFieldModel.intercept_only(math.log(5.0), len(locs), CorrelationModel("gw4", 1e-6))
        y = simulate_poisson_field(m, locs, 71)
        data = _intercept_data(locs, y)
        config = FitConfig(fixed=("alpha", "nugget"))
        init = ParameterVector(np.array([1.0]), alpha=1e-6)
        fit = fit_gaussian_wpl(data, PairWeights(0.1), init=init, config=config)
        i, j, _, _ = data.locs.pairs_within(0.1)

        def neg(beta):
            lam = math.exp(beta)
            z = (y - lam) / math.sqrt(lam)
            ll = -0.5 * (math.log(lam) + z * z)
            return -float(np.sum(ll[i] + ll[j]))

        res = optimize.minimize_scalar(neg, bounds=(0.5, 3.0), method="bounded")
        assert fit.estimate.beta[0] == pytest.approx(res.x, abs=1e-3)

    def test_gaussian_ml_single_site_oracle(self):
        locs = LocationSet(np.array([[0.0, 0.0]]))
        data = _intercept_data(locs, np.array([4]))
        init = ParameterVector(np.array([1.0]), alpha=0.2)
        fit = fit_gaussian_ml(data, init=init, config=FitConfig(fixed=("alpha", "nugget")))

        def neg(beta):
            lam = math.exp(beta)
            return 0.5 * (math.log(lam) + (4.0 - lam) ** 2 / lam)

        res = optimize.minimize_scalar(neg, bounds=(0.0, 3.0), method="bounded")
        assert fit.estimate.beta[0] == pytest.approx(res.x, abs=1e-4)

    def test_gaussian_ml_objective_self_consistency(self, small_field):
        fit = fit_gaussian_ml(small_field)
        assert fit.converged
        assert abs(fit.estimate.beta[0] - math.log(2.0)) < 0.3

    def test_beta_agreement_under_independence(self):
        # generating model has no spatial correlation: the two pairwise
        # estimators agree on the mean parameter
        locs = perturbed_grid(7, 0.05, 0.015, seed=81)
        m = PoissonFieldModel.intercept_only(math.log(2.0), len(locs), CorrelationModel("gw4", 1e-6))
        config = FitConfig(fixed=("alpha", "nugget"))
        init = ParameterVector(np.array([0.5]), alpha=1e-6)
        w = PairWeights(0.1)
        bp, bg = [], []
        for rep in range(100):
            y = simulate_poisson_field(m, locs, (3000 + rep))
            data = _intercept_data(locs, y)
            bp.append(fit_poisson_wpl(data, w, init=init, config=config).estimate.beta[0])
            bg.append(fit_gaussian_wpl(data, w, init=init, config=config).estimate.beta[0])
        bp, bg = np.asarray(bp), np.asarray(bg)
        se = math.sqrt(bp.var(ddof=1) / 100 + bg.var(ddof=1) / 100)
        assert abs(bp.mean() - bg.mean()) <= 2.0 * se


class TestZipFit:
    def test_smoke_recovery(self):
        from countfield.models import ZipFieldModel
        from countfield.simulate import simulate_zip_field

        locs = perturbed_grid(9, 0.05, 0.015, seed=91)
        base = PoissonFieldModel.intercept_only(1.0, len(locs), CorrelationModel("exponential", 0.1))
        zm = ZipFieldModel(base, 0.0, CorrelationModel("exponential", 0.1))
        y = simulate_zip_field(zm, locs, 111)
        data = _intercept_data(locs, y)
        config = FitConfig(family="exponential", fixed=("nugget", "nugget_b"))
        fit = fit_zip_wpl(data, PairWeights(0.12), config=config)
        assert fit.converged
        assert abs(fit.estimate.theta) < 0.6
        assert abs(fit.estimate.beta[0] - 1.0) < 0.5


class TestStandardErrors:
    def test_bootstrap_degenerate(self, small_field):
        fit = fit_poisson_wpl(small_field, PairWeights(0.1))
        with pytest.raises(ValueError):
            bootstrap_std_errors(fit, small_field, PairWeights(0.1), B=1, seed=1)

    def test_bootstrap_positive(self, small_field):
        w = PairWeights(0.1)
        fit = fit_poisson_wpl(small_field, w)
        se = bootstrap_std_errors(fit, small_field, w, B=6, seed=5)
        assert {"beta0", "alpha"} <= set(se)
        assert se["beta0"] > 0.0 and se["alpha"] > 0.0

    def test_godambe_smoke(self, small_field):
        w = PairWeights(0.1)
        fit = fit_poisson_wpl(small_field, w)
        se = godambe_std_errors(fit, small_field, w)
        assert all(v >= 0.0 for v in se.values())
        assert se["beta0"] > 0.0


class TestDefaultInit:
    def test_regression_init_matches_irls(self):
        rng = np.random.default_rng(4)
        n = 200
        x = np.column_stack([np.ones(n), rng.uniform(0, 1, n)])
        beta = np.array([1.5, -0.2])
        y = rng.poisson(np.exp(x @ beta))
        locs = LocationSet(rng.uniform(0, 1, (n, 2)))
        data = FieldData(locs, y, x)
        init = default_init(data)
        assert abs(init.beta[0] - 1.5) < 0.3
        assert abs(init.beta[1] + 0.2) < 0.5
        assert init.nugget == 0.0
