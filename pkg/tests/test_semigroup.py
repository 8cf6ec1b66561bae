import math

import numpy as np
import pytest

from gammalab import (NumericError, build_cache, build_complete,
                      build_ou_chain, build_two_point, ergodic_defect, gamma,
                      gradient_estimate_margin, heat, heat_kernel, heat_many,
                      integrate, iota_coefficient, laplacian,
                      variance_regularization_margin)
from gammalab.curvature import curvature_global

from conftest import scaled


@pytest.fixture(scope="module")
def tp_cache(two_point):
    return build_cache(two_point)


@pytest.fixture(scope="module")
def ou_cache(ou200):
    return build_cache(ou200)


def test_two_point_spectrum(tp_cache):
    np.testing.assert_allclose(tp_cache.eigenvalues, [0.0, -2.0], atol=1e-14)
    assert tp_cache.gap == pytest.approx(2.0, abs=1e-14)


def test_complete3_spectrum():
    cache = build_cache(build_complete(3))
    np.testing.assert_allclose(cache.eigenvalues, [0.0, -3.0, -3.0], atol=1e-13)


def test_zero_eigenvalue_snapped(model_spaces):
    for t in model_spaces.values():
        cache = build_cache(t)
        assert cache.eigenvalues[0] == 0.0
        assert np.all(cache.eigenvalues <= 1e-10)


def test_deterministic_sign_convention(ou200):
    q1 = build_cache(ou200).basis
    q2 = build_cache(ou200).basis
    np.testing.assert_array_equal(q1, q2)
    for k in range(q1.shape[1]):
        col = q1[:, k]
        sig = np.nonzero(np.abs(col) > 1e-12 * np.abs(col).max())[0]
        assert col[sig[0]] > 0


def test_reconstruction(model_spaces):
    for t in model_spaces.values():
        cache = build_cache(t)
        S = (np.sqrt(t.m)[:, None] * t.L) / np.sqrt(t.m)[None, :]
        S = 0.5 * (S + S.T)
        recon = (cache.basis * cache.eigenvalues) @ cache.basis.T
        assert np.abs(S - recon).max() <= 1e-10 * max(1.0, np.abs(S).max())


def test_two_point_heat_closed_form(tp_cache):
    f = np.array([0.0, 1.0])
    for t in (0.0, 0.2, 1.0, 3.0):
        expected = np.array([0.5 - 0.5 * math.exp(-2 * t),
                             0.5 + 0.5 * math.exp(-2 * t)])
        np.testing.assert_allclose(heat(tp_cache, f, t), expected, atol=1e-14)


def test_heat_identity_at_zero(ou_cache):
    f = np.random.default_rng(0).standard_normal(ou_cache.triple.n)
    np.testing.assert_array_equal(heat(ou_cache, f, 0.0), f)


def test_heat_constant_invariant(ou_cache):
    c = np.full(ou_cache.triple.n, 2.5)
    for t in (0.1, 1.0):
        np.testing.assert_allclose(heat(ou_cache, c, t), 2.5, atol=1e-12)


def test_heat_negative_time_rejected(tp_cache):
    with pytest.raises(ValueError):
        heat(tp_cache, np.zeros(2), -0.1)
    with pytest.raises(ValueError):
        heat_kernel(tp_cache, 0.0)


def test_mass_conservation_and_maximum_principle(model_spaces):
    rng = np.random.default_rng(1)
    for triple in model_spaces.values():
        cache = build_cache(triple)
        for _ in range(20):
            f = rng.standard_normal(triple.n)
            for t in (0.1, 0.7, 2.0):
                hf = heat(cache, f, t)
                assert abs(integrate(triple, hf) - integrate(triple, f)) <= 1e-10
                assert hf.max() <= f.max() + 1e-10
                assert hf.min() >= f.min() - 1e-10


def test_semigroup_law(model_spaces):
    rng = np.random.default_rng(2)
    for triple in model_spaces.values():
        cache = build_cache(triple)
        f = rng.standard_normal(triple.n)
        for t, s in ((0.1, 0.3), (0.5, 0.5), (1.0, 0.2)):
            direct = heat(cache, f, t + s)
            staged = heat(cache, heat(cache, f, s), t)
            assert np.abs(direct - staged).max() <= 1e-10


def test_heat_self_adjoint_and_contraction(model_spaces):
    rng = np.random.default_rng(3)
    for triple in model_spaces.values():
        cache = build_cache(triple)
        f = rng.standard_normal(triple.n)
        g = rng.standard_normal(triple.n)
        t = 0.6
        lhs = integrate(triple, heat(cache, f, t) * g)
        rhs = integrate(triple, f * heat(cache, g, t))
        assert abs(lhs - rhs) <= scaled(1e-12, lhs, rhs)
        hf = heat(cache, f, t)
        norm = math.sqrt(integrate(triple, f * f))
        assert math.sqrt(integrate(triple, hf * hf)) <= norm + 1e-12


def test_commutation_with_generator(model_spaces):
    rng = np.random.default_rng(4)
    for triple in model_spaces.values():
        cache = build_cache(triple)
        f = rng.standard_normal(triple.n)
        a = laplacian(triple, heat(cache, f, 0.5))
        b = heat(cache, laplacian(triple, f), 0.5)
        assert np.abs(a - b).max() <= scaled(1e-10, a, b)


def test_time_derivative_first_order(ou_cache):
    f = np.random.default_rng(5).standard_normal(ou_cache.triple.n)
    t = 0.5
    base = laplacian(ou_cache.triple, heat(ou_cache, f, t))
    errs = []
    for h in (1e-3, 1e-4):
        fd = (heat(ou_cache, f, t + h) - heat(ou_cache, f, t)) / h
        errs.append(np.abs(fd - base).max())
    # one-sided difference converges at first order in the step
    assert errs[1] <= 0.2 * errs[0]


def test_heat_many_matches_heat(ou_cache):
    rng = np.random.default_rng(6)
    F = rng.standard_normal((ou_cache.triple.n, 5))
    H = heat_many(ou_cache, F, 0.4)
    for j in range(5):
        np.testing.assert_allclose(H[:, j], heat(ou_cache, F[:, j], 0.4),
                                   atol=1e-12)


class TestKernel:
    def test_two_point_closed_form(self, tp_cache):
        t = 0.7
        e = math.exp(-2 * t)
        expected = 0.5 * np.array([[1 + e, 1 - e], [1 - e, 1 + e]])
        np.testing.assert_allclose(heat_kernel(tp_cache, t), expected, atol=1e-14)

    def test_stochastic_and_symmetric(self, model_spaces):
        for triple in model_spaces.values():
            cache = build_cache(triple)
            P, clips = heat_kernel(cache, 0.5, return_clip_count=True)
            assert P.min() >= 0.0
            np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
            flux = triple.m[:, None] * P
            assert np.abs(flux - flux.T).max() <= scaled(1e-10, flux)
            assert clips <= triple.n * triple.n

    def test_rows_converge_to_measure(self, model_spaces):
        for triple in model_spaces.values():
            cache = build_cache(triple)
            f = np.random.default_rng(7).standard_normal(triple.n)
            t = 12.0 / cache.gap
            P = heat_kernel(cache, t)
            dev = np.abs(P - triple.m[None, :]).max()
            assert dev <= math.exp(-cache.gap * t) * 2.0 / np.sqrt(triple.m.min())

    def test_kernel_row_action_matches_heat(self, ou_cache):
        f = np.random.default_rng(8).standard_normal(ou_cache.triple.n)
        t = 0.3
        np.testing.assert_allclose(heat_kernel(ou_cache, t) @ f,
                                   heat(ou_cache, f, t), atol=1e-11)


class TestErgodicDefect:
    def test_constant(self, tp_cache):
        assert ergodic_defect(tp_cache, np.array([3.0, 3.0]), 1.0) <= 1e-14

    def test_two_point_closed_form(self, tp_cache):
        # ||H_1 f - mean||_{L2(m)} = (1/2) e^{-2} for f = (0, 1)
        d = ergodic_defect(tp_cache, np.array([0.0, 1.0]), 1.0)
        assert d == pytest.approx(0.5 * math.exp(-2.0), rel=1e-12)

    def test_spectral_decay_bound(self, model_spaces):
        rng = np.random.default_rng(9)
        for triple in model_spaces.values():
            cache = build_cache(triple)
            f = rng.standard_normal(triple.n)
            d0 = ergodic_defect(cache, f, 0.0)
            for t in (0.5, 2.0):
                bound = math.exp(-cache.gap * t) * d0
                assert ergodic_defect(cache, f, t) <= bound + 1e-10

    def test_ten_relaxation_times(self, ou_cache):
        f = np.random.default_rng(10).standard_normal(ou_cache.triple.n)
        d0 = ergodic_defect(cache=ou_cache, f=f, t=0.0)
        d = ergodic_defect(ou_cache, f, 10.0 / ou_cache.gap)
        assert d <= 5e-5 * d0


class TestFlowEstimates:
    def test_two_point_exact_equality(self, tp_cache, two_point):
        K = curvature_global(two_point).k_global
        f = np.array([0.0, 1.0])
        for t in (0.1, 0.5, 1.0, 2.0):
            assert abs(gradient_estimate_margin(tp_cache, f, t, K)) <= 1e-12

    def test_gradient_estimate_holds(self, model_spaces):
        rng = np.random.default_rng(11)
        for triple in model_spaces.values():
            K = curvature_global(triple).k_global
            cache = build_cache(triple)
            for _ in range(20):
                f = rng.standard_normal(triple.n)
                for t in (0.1, 1.0):
                    assert gradient_estimate_margin(cache, f, t, K) <= 1e-9

    def test_variance_bound_holds(self, model_spaces):
        rng = np.random.default_rng(12)
        for triple in model_spaces.values():
            K = curvature_global(triple).k_global
            cache = build_cache(triple)
            for _ in range(20):
                f = rng.standard_normal(triple.n)
                for t in (0.1, 1.0):
                    assert variance_regularization_margin(cache, f, t, K) <= 1e-9

    def test_variance_upper_side(self, ou_cache):
        # H_t(f^2) - (H_t f)^2 <= sup |f|^2
        f = np.random.default_rng(13).uniform(-1.0, 1.0, ou_cache.triple.n)
        t = 0.5
        variance = heat(ou_cache, f * f, t) - heat(ou_cache, f, t) ** 2
        assert variance.max() <= np.abs(f).max() ** 2 + 1e-12

    def test_gradient_margin_zero_at_t0(self, ou_cache):
        f = np.random.default_rng(14).standard_normal(ou_cache.triple.n)
        assert gradient_estimate_margin(ou_cache, f, 0.0, 1.0) <= 1e-12


class TestIota:
    def test_value_at_one(self):
        assert iota_coefficient(1.0, 1.0) == pytest.approx(
            0.5 * (math.e ** 2 - 1.0), rel=1e-12)

    def test_small_k_limit(self):
        assert abs(iota_coefficient(1e-8, 1.0) - 1.0) <= 1e-6
        assert iota_coefficient(0.0, 1.7) == 1.7

    def test_variance_requires_positive_time(self, tp_cache):
        with pytest.raises(ValueError):
            variance_regularization_margin(tp_cache, np.zeros(2), 0.0, 1.0)


def test_disconnected_detected_via_spectrum():
    # nearly disconnected graphs keep two near-zero eigenvalues
    eps = 1e-13
    L = np.array([[-eps, eps, 0.0],
                  [eps, -eps - 0.0, 0.0],
                  [0.0, 0.0, 0.0]])
    # this generator is invalid (zero row) and rejected before spectra
    from gammalab import MarkovTriple, TripleValidationError
    with pytest.raises(TripleValidationError):
        MarkovTriple([1 / 3] * 3, L)
