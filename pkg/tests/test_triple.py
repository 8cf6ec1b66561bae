import numpy as np
import pytest

from gammalab import (FieldMismatchError, MarkovTriple, TripleValidationError,
                      build_ou_chain, build_two_point, cheeger_energy, gamma,
                      gamma2, gamma2_weak_form, integrate, laplacian,
                      lip_slope, path_metric, v_norm)
from gammalab.spaces import grid_coordinates

from conftest import random_reversible_triple, scaled


class TestTwoPointHandValues:
    # closed forms obtained by expanding the defining sums on two states

    def test_gamma(self, two_point):
        f = np.array([0.0, 1.0])
        np.testing.assert_allclose(gamma(two_point, f), [0.5, 0.5], atol=1e-15)

    def test_gamma_cross(self, two_point):
        f = np.array([0.0, 1.0])
        g = np.array([1.0, 0.0])
        np.testing.assert_allclose(gamma(two_point, f, g), [-0.5, -0.5], atol=1e-15)

    def test_laplacian(self, two_point):
        np.testing.assert_allclose(
            laplacian(two_point, np.array([0.0, 1.0])), [1.0, -1.0], atol=1e-15)

    def test_gamma2(self, two_point):
        np.testing.assert_allclose(
            gamma2(two_point, np.array([0.0, 1.0])), [1.0, 1.0], atol=1e-14)

    def test_gamma2_mass_identity_value(self, two_point):
        f = np.array([0.0, 1.0])
        assert integrate(two_point, gamma2(two_point, f)) == pytest.approx(1.0, abs=1e-13)
        lf = laplacian(two_point, f)
        assert integrate(two_point, lf * lf) == pytest.approx(1.0, abs=1e-13)

    def test_cheeger(self, two_point):
        assert cheeger_energy(two_point, np.array([0.0, 1.0])) == pytest.approx(
            0.25, abs=1e-15)

    def test_lip_slope(self, two_point):
        np.testing.assert_allclose(
            lip_slope(two_point, np.array([0.0, 1.0])), [1.0, 1.0])


def test_constant_fields_vanish(model_spaces):
    for triple in model_spaces.values():
        c = np.full(triple.n, 1.7)
        assert np.all(gamma(triple, c) == 0.0)
        np.testing.assert_allclose(laplacian(triple, c), 0.0, atol=1e-12)
        np.testing.assert_allclose(gamma2(triple, c), 0.0, atol=1e-12)
        assert cheeger_energy(triple, c) == 0.0
        assert np.all(lip_slope(triple, c) == 0.0)


def test_duality_and_self_adjointness(model_spaces):
    rng = np.random.default_rng(0)
    for triple in model_spaces.values():
        for _ in range(100):
            f = rng.standard_normal(triple.n)
            g = rng.standard_normal(triple.n)
            lhs = -integrate(triple, laplacian(triple, f) * g)
            rhs = integrate(triple, gamma(triple, f, g))
            assert abs(lhs - rhs) <= scaled(1e-12, lhs, rhs)
            sym = integrate(triple, laplacian(triple, f) * g) - integrate(
                triple, f * laplacian(triple, g))
            assert abs(sym) <= scaled(1e-12, lhs, rhs)


def test_product_rule_equivalence(model_spaces):
    rng = np.random.default_rng(1)
    for triple in model_spaces.values():
        for _ in range(25):
            f = rng.standard_normal(triple.n)
            g = rng.standard_normal(triple.n)
            lhs = gamma(triple, f, g)
            rhs = 0.5 * (laplacian(triple, f * g) - f * laplacian(triple, g)
                         - g * laplacian(triple, f))
            assert np.abs(lhs - rhs).max() <= scaled(1e-12, lhs, rhs)


def test_gamma_cauchy_schwarz(model_spaces):
    rng = np.random.default_rng(2)
    for triple in model_spaces.values():
        for _ in range(50):
            f = rng.standard_normal(triple.n)
            g = rng.standard_normal(triple.n)
            cross = gamma(triple, f, g)
            bound = gamma(triple, f) * gamma(triple, g)
            assert np.all(cross * cross <= bound + scaled(1e-12, bound))


def test_gamma_nonneg_and_symmetry(model_spaces):
    rng = np.random.default_rng(3)
    for triple in model_spaces.values():
        f = rng.standard_normal(triple.n)
        g = rng.standard_normal(triple.n)
        assert gamma(triple, f).min() >= 0.0
        np.testing.assert_array_equal(gamma(triple, f, g), gamma(triple, g, f))


def test_gamma2_weak_pointwise_agreement_and_polarization(model_spaces):
    rng = np.random.default_rng(4)
    for triple in model_spaces.values():
        for _ in range(20):
            f = rng.standard_normal(triple.n)
            g = rng.standard_normal(triple.n)
            phi = rng.standard_normal(triple.n)
            weak = gamma2_weak_form(triple, f, g, phi)
            from gammalab import gamma2_bilinear
            pointwise = integrate(triple, gamma2_bilinear(triple, f, g) * phi)
            assert abs(weak - pointwise) <= scaled(1e-10, weak, pointwise)
            plus = gamma2_weak_form(triple, f + g, f + g, phi)
            minus = gamma2_weak_form(triple, f - g, f - g, phi)
            assert abs(weak - 0.25 * plus + 0.25 * minus) <= scaled(
                1e-10, weak, plus, minus)


def test_gamma2_weak_diag_constant_phi(model_spaces):
    # with phi = 1 the weak value integrates by parts to int (Lf)^2 dm
    rng = np.random.default_rng(5)
    for triple in model_spaces.values():
        f = rng.standard_normal(triple.n)
        ones = np.ones(triple.n)
        weak = gamma2_weak_form(triple, f, f, ones)
        lf = laplacian(triple, f)
        expected = integrate(triple, lf * lf)
        assert abs(weak - expected) <= scaled(1e-10, weak, expected)


def test_gamma2_weak_constant_first_argument(model_spaces):
    rng = np.random.default_rng(15)
    for triple in model_spaces.values():
        c = np.full(triple.n, 0.9)
        g = rng.standard_normal(triple.n)
        phi = rng.standard_normal(triple.n)
        val = gamma2_weak_form(triple, c, g, phi)
        assert abs(val) <= scaled(1e-12, g, phi)


def test_gamma2_mass_identity(model_spaces):
    rng = np.random.default_rng(6)
    for triple in model_spaces.values():
        for _ in range(100):
            f = rng.standard_normal(triple.n)
            lhs = integrate(triple, gamma2(triple, f))
            lf = laplacian(triple, f)
            rhs = integrate(triple, lf * lf)
            assert abs(lhs - rhs) <= scaled(1e-10, lhs, rhs)


def test_cheeger_parallelogram(model_spaces):
    rng = np.random.default_rng(7)
    for triple in model_spaces.values():
        for _ in range(100):
            f = rng.standard_normal(triple.n)
            g = rng.standard_normal(triple.n)
            lhs = cheeger_energy(triple, f + g) + cheeger_energy(triple, f - g)
            rhs = 2.0 * cheeger_energy(triple, f) + 2.0 * cheeger_energy(triple, g)
            assert abs(lhs - rhs) <= scaled(1e-12, lhs, rhs)


def test_random_reversible_triples_pass_validation():
    rng = np.random.default_rng(8)
    for n in (3, 5, 9):
        triple = random_reversible_triple(rng, n)
        f = rng.standard_normal(n)
        g = rng.standard_normal(n)
        lhs = -integrate(triple, laplacian(triple, f) * g)
        rhs = integrate(triple, gamma(triple, f, g))
        assert abs(lhs - rhs) <= scaled(1e-12, lhs, rhs)


def test_lip_slope_ou_identity_coordinate():
    n, R = 200, 6.0
    triple = build_ou_chain(n, R)
    x = grid_coordinates(n, R)
    slope = lip_slope(triple, x)
    np.testing.assert_allclose(slope[1:-1], 1.0, atol=1e-10)


def test_v_norm_matches_definition(two_point):
    f = np.array([0.0, 1.0])
    expected = np.sqrt(integrate(two_point, f * f)
                       + 2.0 * cheeger_energy(two_point, f))
    assert v_norm(two_point, f) == pytest.approx(expected, rel=1e-15)


def test_path_metric_chain():
    triple = build_ou_chain(5, 2.0)
    h = 1.0
    d = path_metric(triple)
    assert d[0, 4] == pytest.approx(4 * h, rel=1e-12)
    assert d[1, 2] == pytest.approx(h, rel=1e-12)


class TestValidation:
    def test_negative_rate(self):
        with pytest.raises(TripleValidationError, match="generator positivity"):
            MarkovTriple([0.5, 0.5], [[0.5, -0.5], [1.0, -1.0]])

    def test_row_sums(self):
        with pytest.raises(TripleValidationError, match="conservativity"):
            MarkovTriple([0.5, 0.5], [[-1.0, 1.5], [1.0, -1.0]])

    def test_measure_normalization(self):
        with pytest.raises(TripleValidationError, match="measure normalization"):
            MarkovTriple([0.4, 0.4], [[-1.0, 1.0], [1.0, -1.0]])

    def test_explicit_normalize_flag(self):
        t = MarkovTriple([0.4, 0.4], [[-1.0, 1.0], [1.0, -1.0]], normalize=True)
        assert t.m.sum() == pytest.approx(1.0, abs=1e-15)

    def test_detailed_balance(self):
        m = [0.25, 0.75]
        L = [[-1.0, 1.0], [1.0, -1.0]]
        with pytest.raises(TripleValidationError, match="detailed balance"):
            MarkovTriple(m, L)

    def test_connectivity(self):
        m = [0.25, 0.25, 0.25, 0.25]
        L = np.array([[-1.0, 1.0, 0, 0], [1.0, -1.0, 0, 0],
                      [0, 0, -1.0, 1.0], [0, 0, 1.0, -1.0]])
        with pytest.raises(TripleValidationError, match="connectivity"):
            MarkovTriple(m, L)

    def test_measure_positivity(self):
        with pytest.raises(TripleValidationError, match="measure positivity"):
            MarkovTriple([1.0, 0.0], [[-1.0, 1.0], [1.0, -1.0]])

    def test_field_binding(self, two_point):
        with pytest.raises(FieldMismatchError):
            gamma(two_point, np.array([1.0, 2.0, 3.0]))
        with pytest.raises(FieldMismatchError):
            laplacian(two_point, np.array([np.nan, 0.0]))

    def test_arrays_frozen(self, two_point):
        with pytest.raises(ValueError):
            two_point.L[0, 0] = 5.0
        with pytest.raises(ValueError):
            two_point.m[0] = 0.3

    def test_edge_length_validation(self):
        d = np.array([[0.0, -1.0], [-1.0, 0.0]])
        with pytest.raises(TripleValidationError, match="edge lengths"):
            MarkovTriple([0.5, 0.5], [[-1.0, 1.0], [1.0, -1.0]], edge_lengths=d)
