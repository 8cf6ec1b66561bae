import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gammalab import (c_alpha, c_alpha_prime, normal_cdf, normal_pdf,
                      normal_quantile, profile, profile_slope, profile_value)

mp.mp.dps = 40


def _cdf_mp(r):
    return float(0.5 * mp.erfc(-mp.mpf(r) / mp.sqrt(2)))


class TestCdfPdf:
    def test_symmetry_and_center(self):
        assert normal_cdf(0.0) == 0.5
        assert normal_pdf(0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi),
                                                abs=1e-16)

    def test_against_high_precision(self):
        for r in np.linspace(-8.0, 8.0, 321):
            expected = _cdf_mp(r)
            assert abs(normal_cdf(r) - expected) <= 1e-13 * expected

    def test_reference_value(self):
        # H(1) from 40-digit quadrature
        assert normal_cdf(1.0) == pytest.approx(0.8413447460685429, abs=1e-15)

    def test_monotone(self):
        # strictly monotone while increments resolve in doubles, never
        # decreasing beyond that
        r = np.linspace(-5, 5, 5001)
        assert np.all(np.diff(normal_cdf(r)) > 0)
        wide = np.linspace(-10, 10, 5001)
        assert np.all(np.diff(normal_cdf(wide)) >= 0)

    def test_pdf_is_cdf_derivative(self):
        h = 1e-6
        for r in np.linspace(-5, 5, 41):
            fd = (normal_cdf(r + h) - normal_cdf(r - h)) / (2 * h)
            assert abs(fd - normal_pdf(r)) <= 1e-6


class TestQuantile:
    def test_center(self):
        assert normal_quantile(0.5) == 0.0

    def test_reference_value(self):
        expected = float(mp.sqrt(2) * mp.erfinv(2 * mp.mpf("0.975") - 1))
        assert normal_quantile(0.975) == pytest.approx(expected, abs=1e-13)

    def test_cdf_residual(self):
        for p in np.linspace(1e-6, 1 - 1e-6, 997):
            assert abs(normal_cdf(normal_quantile(p)) - p) <= 1e-13

    def test_roundtrip_left_range(self):
        # full float accuracy wherever the cdf output resolves the point
        r = np.linspace(-6.0, 4.75, 1001)
        err = np.abs(normal_quantile(normal_cdf(r)) - r)
        assert err.max() <= 1e-10

    def test_roundtrip_information_bound(self):
        # near +6 the cdf value sits ulp-close to 1, so any inverse can only
        # locate r to ulp(H(r))/h(r); check we achieve that resolution
        r = np.linspace(-6.0, 6.0, 1201)
        p = normal_cdf(r)
        err = np.abs(normal_quantile(p) - r)
        bound = np.maximum(1e-10, 2.0 * np.spacing(p) / normal_pdf(r))
        assert np.all(err <= bound)

    def test_odd_symmetry(self):
        # exact for dyadic pairs where both p and 1-p are representable
        k = np.arange(1, 1024)
        p = k / 1024.0
        np.testing.assert_array_equal(normal_quantile(p),
                                      -normal_quantile(1.0 - p))

    def test_domain_errors(self):
        for bad in (0.0, 1.0, -0.1, 1.1):
            with pytest.raises(ValueError):
                normal_quantile(bad)

    def test_monotone(self):
        p = np.linspace(1e-8, 1 - 1e-8, 3001)
        assert np.all(np.diff(normal_quantile(p)) > 0)


class TestProfile:
    def test_center_value(self):
        assert profile_value(0.5) == pytest.approx(1.0 / math.sqrt(2 * math.pi),
                                                   abs=1e-15)

    def test_endpoints(self):
        assert profile_value(0.0) == 0.0
        assert profile_value(1.0) == 0.0
        pt = profile(0.0)
        assert pt.value == 0.0 and math.isnan(pt.slope) and math.isnan(pt.second)

    def test_composition_value(self):
        # I(H(1)) = h(1), via the high-precision cdf oracle
        p = _cdf_mp(1.0)
        assert profile_value(p) == pytest.approx(0.24197072451914337, abs=1e-13)

    def test_symmetry(self):
        p = np.linspace(1e-6, 1 - 1e-6, 10001)
        assert np.abs(profile_value(p) - profile_value(1 - p)).max() <= 1e-12

    def test_ode(self):
        for p in np.linspace(1e-6, 1 - 1e-6, 2001):
            pt = profile(p)
            assert abs(pt.value * pt.second + 1.0) <= 1e-10

    def test_slope_matches_difference_quotient(self):
        # h = 1e-5 stencil; away from the endpoints the third derivative
        # keeps its truncation error below 1e-6
        h = 1e-5
        for p in np.linspace(0.01, 0.99, 301):
            fd = (profile_value(p + h) - profile_value(p - h)) / (2 * h)
            assert abs(fd - profile_slope(p)) <= 1e-6

    def test_concavity(self):
        rng = np.random.default_rng(0)
        for _ in range(10000):
            p = np.sort(rng.uniform(0.0, 1.0, 3))
            if p[2] - p[0] < 1e-9:
                continue
            lam = (p[1] - p[0]) / (p[2] - p[0])
            chord = (1 - lam) * profile_value(p[0]) + lam * profile_value(p[2])
            assert chord <= profile_value(p[1]) + 1e-12

    def test_range(self):
        p = np.linspace(0.0, 1.0, 4001)
        vals = profile_value(p)
        assert vals.min() >= 0.0
        assert vals.max() <= 1.0 / math.sqrt(2 * math.pi) + 1e-15

    def test_domain(self):
        with pytest.raises(ValueError):
            profile_value(1.2)
        with pytest.raises(ValueError):
            profile(-0.1)


class TestCAlpha:
    def test_zero_curvature_form(self):
        assert c_alpha(0.0, 1.0, 2.0) == 5.0

    def test_inverse_curvature_fixed_point(self):
        # alpha = 1/K freezes the coefficient at 1/K for every time
        for t in (0.0, 0.1, 1.0, 7.0):
            assert c_alpha(1.0, 1.0, t) == pytest.approx(1.0, rel=1e-15)
            assert c_alpha(2.0, 0.5, t) == pytest.approx(0.5, rel=1e-15)

    def test_at_time_zero(self):
        for K in (-1.0, 0.0, 2.0):
            for alpha in (0.0, 0.3, 2.0):
                assert c_alpha(K, alpha, 0.0) == alpha

    def test_continuity_in_k(self):
        assert abs(c_alpha(1e-9, 0.3, 1.7) - (2 * 1.7 + 0.3)) <= 1e-6

    @settings(max_examples=200, deadline=None)
    @given(K=st.one_of(st.just(0.0),
                       st.floats(1e-6, 3), st.floats(-3, -1e-6)),
           alpha=st.floats(0, 3), t=st.floats(0.01, 3))
    def test_derivative_identity(self, K, alpha, t):
        # K bounded away from the subnormal range where 2*K*t quantizes and
        # the stencil loses the identity for float reasons only
        h = 1e-6
        fd = (c_alpha(K, alpha, t + h) - c_alpha(K, alpha, t - h)) / (2 * h)
        scale = max(1.0, abs(c_alpha(K, alpha, t)))
        assert abs(0.5 * fd - 1.0 + K * c_alpha(K, alpha, t)) <= 1e-8 * scale
        assert abs(fd - c_alpha_prime(K, alpha, t)) <= 1e-7 * scale

    def test_domain(self):
        with pytest.raises(ValueError):
            c_alpha(1.0, -0.1, 1.0)
        with pytest.raises(ValueError):
            c_alpha(1.0, 1.0, -0.5)
