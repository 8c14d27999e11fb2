"""Special-function kernels against independent oracles (quadrature, mpmath)."""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from countfield.errors import SeriesTruncationError
from countfield.specfun import (
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

mp.mp.dps = 40


class TestSeriesControl:
    def test_defaults_valid(self):
        c = SeriesControl()
        assert c.rel_tol > 0 and c.abs_tol >= 0 and c.max_terms >= 1

    @pytest.mark.parametrize(
        "kw", [{"rel_tol": 0.0}, {"rel_tol": -1e-3}, {"abs_tol": -1.0}, {"max_terms": 0}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SeriesControl(**kw)


class TestRegLowerIncGamma:
    def test_shape_one_closed_form(self):
        for x in np.linspace(0.0, 50.0, 101):
            assert abs(reg_lower_inc_gamma(1.0, x) - (-math.expm1(-x))) <= 1e-12

    def test_zero_argument(self):
        assert reg_lower_inc_gamma(3.0, 0.0) == 0.0

    def test_quadrature_oracle(self):
        # direct numerical integration of t^{a-1} e^{-t} on [0, x]
        for a, x in [(3.5, 2.7), (2.0, 1.5), (2.0, 3.0), (10.0, 9.5), (0.3, 0.1)]:
            val, _ = integrate.quad(lambda t: t ** (a - 1.0) * math.exp(-t), 0.0, x)
            oracle = val / math.gamma(a)
            assert reg_lower_inc_gamma(a, x) == pytest.approx(oracle, abs=1e-10)

    def test_log_variant_deep_tail(self):
        # mpmath oracle far below double underflow of the linear value
        for a, x in [(50.0, 2.0), (200.0, 10.0), (5.0, 1e-8)]:
            oracle = float(mp.log(mp.gammainc(a, 0, x, regularized=True)))
            assert log_reg_lower_inc_gamma(a, x) == pytest.approx(oracle, rel=1e-12, abs=1e-10)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            reg_lower_inc_gamma(0.0, 1.0)
        with pytest.raises(ValueError):
            reg_lower_inc_gamma(-2.0, 1.0)
        with pytest.raises(ValueError):
            reg_lower_inc_gamma(1.0, -0.5)

    @given(
        a=st.floats(0.05, 300.0),
        x1=st.floats(0.0, 500.0),
        x2=st.floats(0.0, 500.0),
    )
    @settings(max_examples=300, deadline=None)
    def test_monotone_and_bounded(self, a, x1, x2):
        lo, hi = sorted([x1, x2])
        p_lo = reg_lower_inc_gamma(a, lo)
        p_hi = reg_lower_inc_gamma(a, hi)
        assert 0.0 <= p_lo <= p_hi <= 1.0


class TestGammaProduct:
    def test_closed_form(self):
        assert reg_inc_gamma_product(1.0, 2.0, 2.0) == pytest.approx(
            (-math.expm1(-2.0)) ** 2, abs=1e-13
        )

    def test_vanishing_factor(self):
        assert reg_inc_gamma_product(4.2, 3.3, 0.0) == 0.0

    def test_factorwise_quadrature(self):
        f1, _ = integrate.quad(lambda t: t * math.exp(-t), 0, 1.5)
        f2, _ = integrate.quad(lambda t: t * math.exp(-t), 0, 3.0)
        oracle = f1 * f2 / math.gamma(2.0) ** 2
        assert reg_inc_gamma_product(2.0, 1.5, 3.0) == pytest.approx(oracle, abs=1e-10)


class TestBesselScaled:
    def test_at_zero(self):
        assert bessel_i_scaled(0, 0.0) == 1.0
        assert bessel_i_scaled(1, 0.0) == 0.0

    def test_mpmath_oracle(self):
        for x in [1e-6, 0.5, 5.3333, 30.0, 700.0, 1e5]:
            for order in (0, 1):
                oracle = float(mp.exp(-x) * mp.besseli(order, x))
                assert bessel_i_scaled(order, x) == pytest.approx(oracle, rel=1e-12)

    def test_sum_bounded_and_monotone(self):
        x = np.linspace(0.0, 1e4, 4001)
        s = bessel_i_scaled(0, x) + bessel_i_scaled(1, x)
        assert np.all(s > 0.0) and np.all(s <= 1.0)
        assert np.all(np.diff(s) <= 1e-15)

    def test_domain(self):
        with pytest.raises(ValueError):
            bessel_i_scaled(2, 1.0)
        with pytest.raises(ValueError):
            bessel_i_scaled(0, -1.0)


class TestConfluent:
    def test_at_zero(self):
        for a, b in [(2.0, 4.5), (0.7, 1.2), (5.0, 30.0)]:
            assert reg_confluent_1f1(a, b, 0.0) == pytest.approx(
                1.0 / math.gamma(b), rel=1e-13
            )

    def test_zero_first_parameter(self):
        assert reg_confluent_1f1(0.0, 2.0, 5.0) == pytest.approx(1.0, rel=1e-13)

    def test_mpmath_series_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(60):
            a = rng.uniform(0.1, 10.0)
            b = rng.uniform(0.2, 30.0)
            x = rng.uniform(0.0, 50.0)
            oracle = float(mp.hyp1f1(a, b, x) / mp.gamma(b))
            assert reg_confluent_1f1(a, b, x) == pytest.approx(oracle, rel=1e-9)

    def test_log_variant_large_argument(self):
        for a, b, x in [(3.0, 7.0, 1e5), (2.0, 10.0, 800.0), (6.0, 6.5, 5e4)]:
            oracle = float(mp.log(mp.hyp1f1(a, b, x) / mp.gamma(b)))
            assert log_reg_confluent_1f1(a, b, x) == pytest.approx(oracle, rel=1e-10)

    def test_truncation_failure(self):
        with pytest.raises(SeriesTruncationError):
            reg_confluent_1f1(2.0, 4.5, 50.0, SeriesControl(max_terms=3))

    def test_domain(self):
        with pytest.raises(ValueError):
            reg_confluent_1f1(1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            reg_confluent_1f1(1.0, 2.0, -1.0)


class TestSKernel:
    def test_zero_gamma_argument(self):
        assert s_kernel(1.5, 3.0, 2.0, 4.0, 0.0) == 0.0

    def test_trivial_composition(self):
        assert s_kernel(0.0, 2.0, 1.0, 5.0, 2.0) == pytest.approx(
            -math.expm1(-2.0), rel=1e-12
        )

    def test_component_oracle(self):
        oracle = float(
            mp.hyp1f1(2, 5, 1.1) / mp.gamma(5) * mp.gammainc(3, 0, 0.7, regularized=True)
        )
        assert s_kernel(2.0, 5.0, 3.0, 1.1, 0.7) == pytest.approx(oracle, rel=1e-9)


class TestPochhammer:
    def test_empty_product(self):
        assert pochhammer_log(4.7, 0) == 0.0

    def test_small_integer(self):
        assert pochhammer_log(3.0, 2) == pytest.approx(math.log(12.0), rel=1e-14)

    def test_loggamma_oracle(self):
        oracle = math.lgamma(8.5) - math.lgamma(2.5)
        assert pochhammer_log(2.5, 6) == pytest.approx(oracle, rel=1e-14)

    def test_domain(self):
        with pytest.raises(ValueError):
            pochhammer_log(0.0, 3)
        with pytest.raises(ValueError):
            pochhammer_log(2.0, -1)


class TestGaussPoissonHelpers:
    def test_normal_cdf_symmetry(self):
        assert normal_cdf(0.0) == 0.5
        for x in [0.3, 1.7, 4.0]:
            assert normal_cdf(x) + normal_cdf(-x) == pytest.approx(1.0, abs=1e-14)

    def test_normal_quantile_roundtrip(self):
        for p in [1e-8, 0.3, 0.5, 0.9, 1 - 1e-8]:
            assert normal_cdf(normal_quantile(p)) == pytest.approx(p, rel=1e-9)
        with pytest.raises(ValueError):
            normal_quantile(0.0)
        with pytest.raises(ValueError):
            normal_quantile(1.0)

    def test_poisson_quantile(self):
        assert poisson_quantile(0.5, 1e-10) == 0
        assert poisson_quantile(0.999999, 5.0) >= 5
        # smallest n with cdf >= p, against a direct scan
        from scipy import stats

        for lam in [0.5, 3.0, 20.0]:
            for p in [0.1, 0.5, 0.9, 1 - 1e-9]:
                n = poisson_quantile(p, lam)
                assert stats.poisson.cdf(n, lam) >= p
                if n > 0:
                    assert stats.poisson.cdf(n - 1, lam) < p
        with pytest.raises(ValueError):
            poisson_quantile(1.0, 2.0)


def _mp_bvn(x, y, r):
    f = lambda t: mp.exp(-(x * x - 2 * mp.sin(t) * x * y + y * y) / (2 * mp.cos(t) ** 2))
    return float(mp.ncdf(x) * mp.ncdf(y) + mp.quad(f, [0, mp.asin(r)]) / (2 * mp.pi))


class TestBivariateNormalCdf:
    def test_orthant_identity(self):
        # Pr(X<=0, Y<=0) = 1/4 + asin(rho) / (2 pi)
        for rho in [-0.9, -0.3, 0.0, 0.5, 0.95]:
            oracle = 0.25 + math.asin(rho) / (2.0 * math.pi)
            assert bivariate_normal_cdf(0.0, 0.0, rho) == pytest.approx(oracle, abs=1e-12)

    def test_mpmath_grid(self):
        pts = [
            (0.0, 0.0, 0.5),
            (1.0, -0.5, 0.999),
            (-2.0, 0.7, -0.999),
            (3.0, 3.0, 0.9),
            (-4.0, -1.0, 0.2),
            (6.0, -6.0, 0.8),
        ]
        for x, y, r in pts:
            assert bivariate_normal_cdf(x, y, r) == pytest.approx(
                _mp_bvn(x, y, r), abs=1e-8
            )

    def test_independence(self):
        assert bivariate_normal_cdf(0.7, -0.2, 0.0) == pytest.approx(
            normal_cdf(0.7) * normal_cdf(-0.2), abs=1e-14
        )

    def test_broadcast(self):
        rho = np.array([0.1, 0.5, 0.9])
        out = bivariate_normal_cdf(0.0, 0.0, rho)
        assert out.shape == (3,)
        assert np.all(np.diff(out) > 0)

    def test_domain(self):
        with pytest.raises(ValueError):
            bivariate_normal_cdf(0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            bivariate_normal_cdf(0.0, 0.0, 0.5, quad_nodes=8)


class TestNoOverflowInProductionRange:
    def test_kernels_finite_far_out(self):
        # arguments arising in the closed-form count correlation at
        # lam = 1e4, |rho| = 0.999
        z = 2.0 * 1e4 / (1.0 - 0.999**2)
        assert math.isfinite(bessel_i_scaled(0, z))
        assert math.isfinite(bessel_i_scaled(1, z))
        assert math.isfinite(log_reg_lower_inc_gamma(1e4, z))
        assert math.isfinite(log_reg_confluent_1f1(2.0, 5.0, z))
