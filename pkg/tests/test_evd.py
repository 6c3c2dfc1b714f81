import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from spatial_extremes import (
    DomainError, GevParams, GpdParams, InvalidParameterError, KernelAccuracy, OutOfSupportError,
    frechet_to_gumbel, from_unit_frechet, gev_cdf, gev_logpdf, gev_ppf, gpd_survivor,
    kernel_bessel_k, kernel_normal, kernel_normal_inv, kernel_student_t, kernel_student_t_inv,
    return_level, to_unit_frechet,
)

mp.mp.dps = 40


def mp_gev_cdf(y, eta, tau, xi):
    y, eta, tau, xi = (mp.mpf(v) for v in (y, eta, tau, xi))
    if xi == 0:
        return mp.exp(-mp.exp(-(y - eta) / tau))
    t = 1 + xi * (y - eta) / tau
    if t <= 0:
        return mp.mpf(0) if xi > 0 else mp.mpf(1)
    return mp.exp(-t ** (-1 / xi))


class TestGevCdf:
    def test_gumbel_at_location(self):
        assert gev_cdf(3.0, GevParams(3.0, 7.0, 0.0)) == pytest.approx(math.exp(-1), rel=1e-15)

    def test_lower_endpoint(self):
        p = GevParams(0.0, 1.0, 0.5)
        assert gev_cdf(p.eta - p.tau / p.xi, p) == 0.0

    def test_arbitrary_precision_value(self):
        # exp(-1.2**-5); mpmath gives 0.66906265266782
        assert gev_cdf(1.0, GevParams(0, 1, 0.2)) == pytest.approx(0.6690626526678190, rel=1e-14)

    @given(st.floats(-5, 20), st.floats(0.1, 10), st.floats(-0.9, 0.9))
    def test_matches_mpmath(self, y, tau, xi):
        got = gev_cdf(y, GevParams(1.0, tau, xi))
        want = float(mp_gev_cdf(y, 1.0, tau, xi if abs(xi) >= 1e-8 else 0))
        assert got == pytest.approx(want, rel=1e-10, abs=1e-300)

    def test_gumbel_branch_continuity(self):
        a = gev_cdf(1.3, GevParams(0, 1, 1e-9))
        b = gev_cdf(1.3, GevParams(0, 1, 1e-6))
        assert abs(a - b) < 1e-5

    def test_upper_endpoint_negative_shape(self):
        p = GevParams(0, 1, -0.5)
        assert gev_cdf(p.upper_endpoint + 1, p) == 1.0

    def test_rejects_bad_scale(self):
        with pytest.raises(InvalidParameterError):
            GevParams(0, 0, 0.1)
        with pytest.raises(InvalidParameterError):
            GevParams(0, 1, math.nan)


class TestGevLogpdf:
    def test_gumbel_value(self):
        assert gev_logpdf(0.0, GevParams(0, 1, 0)) == pytest.approx(-1.0, rel=1e-15)

    def test_outside_support(self):
        assert gev_logpdf(-1.5, GevParams(0, 1, 1.0)) == -math.inf

    @pytest.mark.parametrize("xi", [0.2, -0.3, 0.0])
    def test_finite_difference_of_cdf(self, xi):
        p = GevParams(0, 1, xi)
        h = 1e-5
        fd = (gev_cdf(1 + h, p) - gev_cdf(1 - h, p)) / (2 * h)
        assert math.exp(gev_logpdf(1.0, p)) == pytest.approx(fd, rel=1e-6)

    def test_integrates_to_one(self):
        from scipy.integrate import quad
        p = GevParams(2, 3, 0.25)
        val, _ = quad(lambda y: math.exp(gev_logpdf(y, p)), p.lower_endpoint, np.inf, limit=200)
        assert val == pytest.approx(1.0, abs=1e-8)


class TestQuantiles:
    def test_return_level_gumbel(self):
        assert return_level(100, GevParams(26, 9, 0)) == pytest.approx(26 + 9 * 4.600149, abs=1e-3)

    def test_return_level_at_location(self):
        T = math.e / (math.e - 1)
        assert return_level(T, GevParams(4.0, 2.0, 0.0)) == pytest.approx(4.0, abs=1e-12)

    @given(st.floats(0.001, 0.999), st.floats(-0.8, 0.8))
    def test_ppf_inverts_cdf(self, q, xi):
        p = GevParams(1, 2, xi)
        assert gev_cdf(gev_ppf(q, p), p) == pytest.approx(q, rel=1e-9)

    def test_return_level_rejects_short_period(self):
        with pytest.raises(DomainError):
            return_level(1.0, GevParams(0, 1, 0))

    def test_return_level_large_period(self):
        # no cancellation at huge T
        p = GevParams(0, 1, 0)
        assert return_level(1e12, p) == pytest.approx(float(-mp.log(-mp.log1p(-mp.mpf(10) ** -12))), rel=1e-12)

    def test_ppf_domain(self):
        with pytest.raises(DomainError):
            gev_ppf(1.0, GevParams(0, 1, 0))


class TestGpd:
    def test_zero(self):
        assert gpd_survivor(0.0, GpdParams(2, 0.2)) == 1.0

    def test_exponential(self):
        assert gpd_survivor(1.0, GpdParams(1, 0)) == pytest.approx(math.exp(-1))

    def test_value(self):
        assert gpd_survivor(3.0, GpdParams(2, 0.2)) == pytest.approx(1.3 ** -5, rel=1e-12)
        assert 1.3 ** -5 == pytest.approx(0.269329, abs=1e-6)

    def test_negative_x(self):
        with pytest.raises(DomainError):
            gpd_survivor(-1.0, GpdParams(1, 0))


class TestFrechetTransforms:
    def test_location_maps_to_one(self):
        assert to_unit_frechet(5.0, GevParams(5, 2, 0)) == pytest.approx(1.0)

    def test_value(self):
        assert to_unit_frechet(1.0, GevParams(0, 1, 0.2)) == pytest.approx(2.48832, rel=1e-12)

    @given(st.floats(0.01, 100), st.floats(-0.4, 0.6))
    def test_round_trip(self, z, xi):
        p = GevParams(3, 2, xi)
        assert to_unit_frechet(from_unit_frechet(z, p), p) == pytest.approx(z, rel=1e-9)

    def test_out_of_support(self):
        with pytest.raises(OutOfSupportError):
            to_unit_frechet(-10.0, GevParams(0, 1, 0.5))

    @pytest.mark.parametrize("z,want", [(1.0, 0.0), (math.e, 1.0), (2.48832, 0.911608)])
    def test_gumbel_scale(self, z, want):
        assert frechet_to_gumbel(z) == pytest.approx(want, abs=1e-6)

    def test_gumbel_scale_domain(self):
        with pytest.raises(DomainError):
            frechet_to_gumbel(0.0)


class TestKernels:
    acc = KernelAccuracy()

    def test_normal_values(self):
        assert kernel_normal(0.0) == 0.5
        assert kernel_normal(0.5) == pytest.approx(0.691462, abs=1e-6)

    def test_normal_symmetry(self):
        x = np.linspace(-8, 8, 101)
        assert np.allclose(kernel_normal(-x), 1 - kernel_normal(x), atol=self.acc.normal)

    def test_normal_against_erf_series(self):
        x = np.linspace(-6, 6, 25)
        want = np.array([float(mp.ncdf(v)) for v in x])
        assert np.allclose(kernel_normal(x), want, atol=self.acc.normal, rtol=0)

    def test_normal_inverse(self):
        p = np.array([1e-10, 0.1, 0.5, 0.9])
        assert np.allclose(kernel_normal(kernel_normal_inv(p)), p, rtol=1e-12)
        with pytest.raises(DomainError):
            kernel_normal_inv(0.0)

    def test_student_values(self):
        assert kernel_student_t(0.0, 3.7) == 0.5
        assert kernel_student_t(math.sqrt(2), 2) == pytest.approx(0.5 + math.sqrt(2) / (2 * math.sqrt(4)),
                                                                  abs=self.acc.student_t)

    def test_student_cauchy(self):
        x = np.linspace(-20, 20, 41)
        assert np.allclose(kernel_student_t(x, 1), 0.5 + np.arctan(x) / math.pi, atol=self.acc.student_t)

    @pytest.mark.parametrize("nu", [0.01, 0.5, 2.5, 30.0, 1e6])
    def test_student_against_mpmath(self, nu):
        x = np.array([-3.0, -0.7, 0.4, 2.0])

        def cdf(v):
            v, n = mp.mpf(v), mp.mpf(nu)
            tail = mp.betainc(n / 2, mp.mpf(1) / 2, 0, n / (n + v * v), regularized=True) / 2
            return 1 - tail if v > 0 else tail

        want = np.array([float(cdf(v)) for v in x])
        assert np.allclose(kernel_student_t(x, nu), want, atol=self.acc.student_t, rtol=0)

    def test_student_inverse(self):
        p = np.array([0.01, 0.3, 0.5, 0.99])
        assert np.allclose(kernel_student_t(kernel_student_t_inv(p, 4.5), 4.5), p, atol=1e-12)

    def test_student_domain(self):
        with pytest.raises(DomainError):
            kernel_student_t(1.0, 0.0)

    def test_bessel_half_integer(self):
        x = np.linspace(0.05, 30, 50)
        want = np.sqrt(math.pi / (2 * x)) * np.exp(-x)
        assert np.allclose(kernel_bessel_k(0.5, x), want, rtol=1e-12, atol=self.acc.bessel)

    def test_bessel_value_and_symmetry(self):
        assert kernel_bessel_k(1, 1.0) == pytest.approx(0.601907, abs=1e-6)
        assert kernel_bessel_k(1.3, 2.0) == pytest.approx(kernel_bessel_k(-1.3, 2.0), rel=1e-14)
        assert kernel_bessel_k(2.2, 0.7) == pytest.approx(float(mp.besselk(2.2, 0.7)), abs=self.acc.bessel)

    def test_bessel_domain(self):
        with pytest.raises(DomainError):
            kernel_bessel_k(1, 0.0)

    def test_accuracy_budget_validated(self):
        with pytest.raises(InvalidParameterError):
            KernelAccuracy(normal=1e-3)
