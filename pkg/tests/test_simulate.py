"""Simulation: determinism, marginal laws, dependence structure, designs."""

import math

import numpy as np
import pytest
from scipy import stats

from countfield.correlation import CorrelationModel, rho_poisson_stationary, underlying_from_distance
from countfield.errors import DataError
from countfield.locations import LocationSet, perturbed_grid, space_time_product, uniform_sites
from countfield.models import PoissonFieldModel, ZipFieldModel
from countfield.rng import SeedSpec
from countfield.simulate import (
    simulate_exponential,
    simulate_gaussian,
    simulate_poisson_field,
    simulate_zip_field,
)


class TestLocations:
    def test_perturbed_grid_paper_size(self):
        locs = perturbed_grid(21, 0.05, 0.015, seed=1)
        assert len(locs) == 441
        assert locs.coords.min() >= -0.015 - 1e-12
        assert locs.coords.max() <= 1.0 + 0.015 + 1e-12

    def test_zero_jitter_exact_grid(self):
        locs = perturbed_grid(4, 0.1, 0.0, seed=2)
        axis = np.arange(4) * 0.1
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        assert np.array_equal(locs.coords, np.column_stack([xx.ravel(), yy.ravel()]))

    def test_min_distance_positive(self):
        locs = perturbed_grid(10, 0.05, 0.015, seed=3)
        d = locs.distance_matrix()
        iu = np.triu_indices(len(locs), k=1)
        assert d[iu].min() > 0.0

    def test_jitter_bound(self):
        with pytest.raises(ValueError):
            perturbed_grid(5, 0.05, 0.025, seed=0)

    def test_distinctness_enforced(self):
        with pytest.raises(DataError):
            LocationSet(np.array([[0.0, 0.0], [0.0, 0.0]]))

    def test_pairs_within_inclusive_boundary(self):
        locs = LocationSet(np.array([[0.0, 0.0], [0.1, 0.0], [0.5, 0.5]]))
        i, j, dist, _ = locs.pairs_within(0.1)
        assert list(zip(i, j)) == [(0, 1)]
        assert dist[0] == pytest.approx(0.1)

    def test_spacetime_pairs(self):
        sites = LocationSet(np.array([[0.0, 0.0], [0.05, 0.0]]))
        st_locs = space_time_product(sites, [0.0, 0.25, 0.5])
        assert len(st_locs) == 6
        i, j, dist, tlag = st_locs.pairs_within(0.06, xi_t=0.25)
        assert np.all(np.abs(tlag) <= 0.25)
        # same-site different-time pairs qualify at distance zero
        assert np.any(dist == 0.0)

    def test_spacetime_requires_xi_t(self):
        sites = LocationSet(np.array([[0.0, 0.0], [0.05, 0.0]]))
        st_locs = space_time_product(sites, [0.0, 0.25])
        with pytest.raises(ValueError):
            st_locs.pairs_within(0.1)


class TestSeedSpec:
    def test_deterministic(self):
        a = SeedSpec(7).generator("x").standard_normal(5)
        b = SeedSpec(7).generator("x").standard_normal(5)
        assert np.array_equal(a, b)

    def test_streams_differ(self):
        a = SeedSpec(7, stream=0).generator("x").standard_normal(5)
        b = SeedSpec(7, stream=1).generator("x").standard_normal(5)
        assert not np.array_equal(a, b)

    def test_path_separation(self):
        a = SeedSpec(7).generator("x", 0).standard_normal(5)
        b = SeedSpec(7).generator("x", 1).standard_normal(5)
        assert not np.array_equal(a, b)


class TestGaussianField:
    def test_single_site_standard_normal(self):
        locs = LocationSet(np.array([[0.0, 0.0]]))
        x = simulate_gaussian(locs, CorrelationModel("gw4", 0.2), 5, reps=100_000)
        assert x.mean() == pytest.approx(0.0, abs=0.02)
        assert x.std() == pytest.approx(1.0, abs=0.02)

    def test_target_correlation(self):
        pts = np.array([[0.0, 0.0], [0.05, 0.0], [2.0, 2.0]])
        locs = LocationSet(pts)
        corr = CorrelationModel("gw4", 0.2)
        x = simulate_gaussian(locs, corr, 6, reps=100_000)
        emp = np.corrcoef(x.T)
        target = underlying_from_distance(corr, locs.distance_matrix())
        assert np.max(np.abs(emp - target)) <= 0.01


class TestExponentialField:
    def test_moments(self):
        locs = LocationSet(np.array([[0.0, 0.0], [0.05, 0.0]]))
        lam = np.array([2.0, 5.0])
        w = simulate_exponential(locs, lam, CorrelationModel("gw4", 0.2), 3, reps=100_000)
        for k in range(2):
            se_mean = (1 / lam[k]) / math.sqrt(1e5)
            assert w[:, k].mean() == pytest.approx(1 / lam[k], abs=3 * se_mean)
            assert w[:, k].var() == pytest.approx(1 / lam[k] ** 2, rel=0.05)

    def test_squared_underlying_correlation(self):
        locs = LocationSet(np.array([[0.0, 0.0], [0.05, 0.0]]))
        corr = CorrelationModel("gw4", 0.2)
        w = simulate_exponential(locs, 2.0, corr, 3, reps=200_000)
        rho = underlying_from_distance(corr, 0.05)
        assert np.corrcoef(w.T)[0, 1] == pytest.approx(rho**2, abs=0.01)


class TestCountField:
    def test_bit_identical_given_seed(self):
        locs = perturbed_grid(5, 0.05, 0.015, seed=4)
        m = PoissonFieldModel.intercept_only(math.log(2.0), len(locs), CorrelationModel("gw4", 0.2))
        a = simulate_poisson_field(m, locs, SeedSpec(11, stream=3))
        b = simulate_poisson_field(m, locs, SeedSpec(11, stream=3))
        assert np.array_equal(a, b)
        c = simulate_poisson_field(m, locs, SeedSpec(11, stream=4))
        assert not np.array_equal(a, c)

    def test_marginal_chi_square(self):
        locs = LocationSet(np.array([[0.0, 0.0], [0.3, 0.4], [0.9, 0.1]]))
        m = PoissonFieldModel.intercept_only(math.log(2.0), 3, CorrelationModel("gw4", 0.2))
        y = simulate_poisson_field(m, locs, 17, reps=100_000)
        for k in range(3):
            obs = np.bincount(y[:, k], minlength=30)
            expected = stats.poisson.pmf(np.arange(30), 2.0) * 1e5
            keep = expected >= 5.0
            # fold the tail into the last kept cell
            obs_f = np.concatenate([obs[keep][:-1], [obs[~keep].sum() + obs[keep][-1]]])
            exp_f = np.concatenate([expected[keep][:-1], [expected[~keep].sum() + expected[keep][-1]]])
            chi2 = float(np.sum((obs_f - exp_f) ** 2 / exp_f))
            crit = stats.chi2.ppf(0.99, len(obs_f) - 1)
            assert chi2 < crit

    def test_independent_sites_factorize(self):
        locs = LocationSet(np.array([[0.0, 0.0], [5.0, 5.0]]))
        m = PoissonFieldModel.intercept_only(math.log(2.0), 2, CorrelationModel("gw4", 0.2))
        y = simulate_poisson_field(m, locs, 23, reps=200_000)
        joint = float(np.mean((y[:, 0] == 1) & (y[:, 1] == 2)))
        marg = float(np.mean(y[:, 0] == 1)) * float(np.mean(y[:, 1] == 2))
        assert joint == pytest.approx(marg, abs=4 * math.sqrt(joint / 2e5))
        assert abs(np.corrcoef(y.T)[0, 1]) <= 0.01

    def test_pair_correlation_matches_closed_form(self):
        locs = LocationSet(np.array([[0.0, 0.0], [0.05, 0.0]]))
        corr = CorrelationModel("gw4", 0.2)
        m = PoissonFieldModel.intercept_only(math.log(2.0), 2, corr)
        y = simulate_poisson_field(m, locs, 29, reps=200_000)
        rho = underlying_from_distance(corr, 0.05)
        target = rho_poisson_stationary(rho, 2.0)
        se = (1 - target**2) / math.sqrt(2e5)
        assert np.corrcoef(y.T)[0, 1] == pytest.approx(target, abs=3 * se)

    def test_horizon_rescaling(self):
        locs = LocationSet(np.array([[0.0, 0.0]]))
        m = PoissonFieldModel(np.array([math.log(2.0)]), np.ones((1, 1)), CorrelationModel("gw4", 0.2), t=3.0)
        y = simulate_poisson_field(m, locs, 31, reps=50_000)
        assert y.mean() == pytest.approx(6.0, abs=3 * math.sqrt(6.0 / 5e4))

    def test_nonstationary_mean(self):
        rng = np.random.default_rng(0)
        x = np.column_stack([np.ones(4), rng.uniform(0, 1, 4)])
        locs = LocationSet(rng.uniform(0, 1, (4, 2)))
        m = PoissonFieldModel(np.array([1.5, -0.2]), x, CorrelationModel("gw4", 0.2))
        y = simulate_poisson_field(m, locs, 37, reps=50_000)
        lam = m.rates()
        for k in range(4):
            assert y[:, k].mean() == pytest.approx(lam[k], abs=4 * math.sqrt(lam[k] / 5e4))


class TestZipField:
    def test_degenerate_mask_is_plain_count_field(self):
        locs = LocationSet(np.array([[0.0, 0.0], [0.05, 0.0]]))
        base = PoissonFieldModel.intercept_only(math.log(2.0), 2, CorrelationModel("gw4", 0.2))
        zm = ZipFieldModel(base, -8.0, CorrelationModel("exponential", 0.1))
        y = simulate_zip_field(zm, locs, 41, reps=100_000)
        obs = np.bincount(y[:, 0], minlength=25)
        expected = stats.poisson.pmf(np.arange(25), 2.0) * 1e5
        keep = expected >= 5.0
        obs_f = np.concatenate([obs[keep][:-1], [obs[~keep].sum() + obs[keep][-1]]])
        exp_f = np.concatenate([expected[keep][:-1], [expected[~keep].sum() + expected[keep][-1]]])
        chi2 = float(np.sum((obs_f - exp_f) ** 2 / exp_f))
        assert chi2 < stats.chi2.ppf(0.99, len(obs_f) - 1)

    def test_zero_probability_and_mean(self):
        locs = LocationSet(np.array([[0.0, 0.0]]))
        base = PoissonFieldModel.intercept_only(math.log(2.0), 1, CorrelationModel("gw4", 0.2))
        zm = ZipFieldModel(base, 0.5, CorrelationModel("gw4", 0.2))
        y = simulate_zip_field(zm, locs, 43, reps=100_000)[:, 0]
        p = stats.norm.cdf(0.5)
        p0 = p + (1 - p) * math.exp(-2.0)
        se0 = math.sqrt(p0 * (1 - p0) / 1e5)
        assert float(np.mean(y == 0)) == pytest.approx(p0, abs=3 * se0)
        mean = (1 - p) * 2.0
        var = mean * (1 + p * 2.0)
        assert y.mean() == pytest.approx(mean, abs=3 * math.sqrt(var / 1e5))


class TestUniformSites:
    def test_in_unit_square(self):
        locs = uniform_sites(40, seed=9)
        assert len(locs) == 40
        assert locs.coords.min() >= 0.0 and locs.coords.max() <= 1.0
