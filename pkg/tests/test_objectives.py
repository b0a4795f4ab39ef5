import numpy as np
import pytest
import scipy.sparse

from blockprec import (
    EXACT_HESSIAN,
    SMOOTHNESS_BOUND,
    InvalidArgumentError,
    Quadratic,
    UnsupportedLossError,
    logistic,
    ridge,
)


def central_diff_gradient(obj, x):
    """Finite-difference oracle: central differences with step 1e-6 (1 + ||x||)."""
    h = 1e-6 * (1.0 + np.linalg.norm(x))
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (obj.value(x + e) - obj.value(x - e)) / (2.0 * h)
    return g


def random_glm_data(rng, m=14, n=9):
    a = rng.standard_normal((m, n)) / np.sqrt(m)
    y_real = rng.standard_normal(m)
    y_pm = np.where(rng.standard_normal(m) >= 0, 1.0, -1.0)
    return a, y_real, y_pm


class TestQuadratic:
    def test_value_identity(self):
        obj = Quadratic(np.eye(3), np.zeros(3))
        assert obj.value(np.array([1.0, 0.0, 0.0])) == 0.5

    def test_gradient_vanishes_at_optimum(self):
        rng = np.random.default_rng(0)
        g = rng.standard_normal((5, 10))
        obj = Quadratic(g @ g.T / 10 + 0.2 * np.eye(5), rng.standard_normal(5))
        x_star, _ = obj.optimum()
        assert np.linalg.norm(obj.gradient(x_star)) <= 1e-10

    def test_optimum_diagonal(self):
        n = 4
        obj = Quadratic(2.0 * np.eye(n), 2.0 * np.ones(n))
        x_star, f_star = obj.optimum()
        np.testing.assert_allclose(x_star, np.ones(n))
        assert f_star == pytest.approx(-n)

    def test_curvature_is_h_for_both_models(self):
        rng = np.random.default_rng(1)
        g = rng.standard_normal((4, 8))
        h = g @ g.T / 8 + 0.3 * np.eye(4)
        obj = Quadratic(h, np.zeros(4))
        x = rng.standard_normal(4)
        np.testing.assert_array_equal(obj.curvature(x, EXACT_HESSIAN), h)
        np.testing.assert_array_equal(obj.curvature(x, SMOOTHNESS_BOUND), h)

    def test_rejects_indefinite_h(self):
        with pytest.raises(InvalidArgumentError):
            Quadratic(np.array([[1.0, 2.0], [2.0, 1.0]]), np.zeros(2))

    def test_dimension_mismatch(self):
        obj = Quadratic(np.eye(3), np.zeros(3))
        with pytest.raises(InvalidArgumentError):
            obj.value(np.zeros(4))

    def test_suboptimality_error_form_matches_naive(self):
        rng = np.random.default_rng(2)
        g = rng.standard_normal((6, 12))
        obj = Quadratic(g @ g.T / 12 + 0.2 * np.eye(6), rng.standard_normal(6))
        _, f_star = obj.optimum()
        x = rng.standard_normal(6)
        naive = obj.value(x) - f_star
        assert obj.suboptimality(x) == pytest.approx(naive, rel=1e-10)
        assert obj.suboptimality(x) >= 0.0


class TestRidge:
    def test_value_identity_data(self):
        obj = ridge(np.eye(2), np.zeros(2), lam=0.0)
        assert obj.value(np.array([1.0, 1.0])) == 1.0

    def test_curvature_regularizer_only(self):
        obj = ridge(np.zeros((3, 2)), np.zeros(3), lam=1.0)
        np.testing.assert_array_equal(obj.curvature(np.zeros(2)), np.eye(2))

    def test_optimum_scalar_per_coordinate(self):
        # A = I, y = e1, lambda = 1: x* = e1/2, f* = 1/4
        e1 = np.array([1.0, 0.0])
        obj = ridge(np.eye(2), e1, lam=1.0)
        x_star, f_star = obj.optimum()
        np.testing.assert_allclose(x_star, e1 / 2)
        assert f_star == pytest.approx(0.25)

    def test_curvature_constant_in_x(self):
        rng = np.random.default_rng(3)
        a, y, _ = random_glm_data(rng)
        obj = ridge(a, y, lam=0.5)
        q0 = obj.curvature(np.zeros(obj.n))
        q1 = obj.curvature(rng.standard_normal(obj.n))
        np.testing.assert_array_equal(q0, q1)

    def test_sparse_matches_dense(self):
        rng = np.random.default_rng(4)
        a, y, _ = random_glm_data(rng)
        a[np.abs(a) < 0.1] = 0.0
        dense = ridge(a, y, lam=0.3)
        sparse = ridge(scipy.sparse.csr_matrix(a), y, lam=0.3)
        x = rng.standard_normal(dense.n)
        assert dense.value(x) == pytest.approx(sparse.value(x), rel=1e-12)
        np.testing.assert_allclose(dense.gradient(x), sparse.gradient(x), rtol=1e-12)
        np.testing.assert_allclose(dense.curvature(x), sparse.curvature(x), rtol=1e-12)

    def test_rank_deficient_unregularized_optimum_rejected(self):
        a = np.array([[1.0, 1.0], [2.0, 2.0]])
        obj = ridge(a, np.array([1.0, 2.0]), lam=0.0)
        with pytest.raises(InvalidArgumentError):
            obj.optimum()


class TestLogistic:
    def test_value_at_zero_margins(self):
        rng = np.random.default_rng(5)
        a, _, y = random_glm_data(rng)
        obj = logistic(a, y, lam=3.0)
        assert obj.value(np.zeros(obj.n)) == pytest.approx(a.shape[0] * np.log(2.0))

    def test_gradient_at_zero(self):
        rng = np.random.default_rng(6)
        a, _, y = random_glm_data(rng)
        obj = logistic(a, y, lam=0.7)
        np.testing.assert_allclose(obj.gradient(np.zeros(obj.n)), -0.5 * a.T @ y,
                                   rtol=1e-12, atol=1e-14)

    def test_labels_validated(self):
        with pytest.raises(InvalidArgumentError):
            logistic(np.eye(2), np.array([0.0, 1.0]))

    def test_curvature_exact_at_zero_is_quarter_gram(self):
        rng = np.random.default_rng(7)
        a, _, y = random_glm_data(rng)
        obj = logistic(a, y, lam=0.2)
        expected = 0.25 * a.T @ a + 0.2 * np.eye(obj.n)
        np.testing.assert_allclose(obj.curvature(np.zeros(obj.n), EXACT_HESSIAN),
                                   expected, rtol=1e-12)
        np.testing.assert_allclose(obj.curvature(rng.standard_normal(obj.n),
                                                 SMOOTHNESS_BOUND),
                                   expected, rtol=1e-12)

    def test_smoothness_bound_dominates_exact(self):
        rng = np.random.default_rng(8)
        a, _, y = random_glm_data(rng)
        obj = logistic(a, y, lam=0.1)
        for _ in range(10):
            x = 3.0 * rng.standard_normal(obj.n)
            gap = obj.curvature(x, SMOOTHNESS_BOUND) - obj.curvature(x, EXACT_HESSIAN)
            assert np.linalg.eigvalsh(gap)[0] >= -1e-12

    def test_finite_for_huge_margins(self):
        a = np.array([[1.0], [-1.0]])
        y = np.array([1.0, -1.0])
        obj = logistic(a, y, lam=0.5)
        for scale in (1e2, 1e4):
            for sign in (1.0, -1.0):
                x = np.array([sign * scale])
                assert np.isfinite(obj.value(x))
                assert np.all(np.isfinite(obj.gradient(x)))

    def test_optimum_requires_regularization(self):
        obj = logistic(np.eye(2), np.array([1.0, -1.0]), lam=0.0)
        with pytest.raises(UnsupportedLossError):
            obj.optimum()

    def test_optimum_reproducible_across_instances(self):
        rng = np.random.default_rng(9)
        a, _, y = random_glm_data(rng, m=30, n=8)
        first = logistic(a, y, lam=1.0)
        second = logistic(a.copy(), y.copy(), lam=1.0)
        x1, f1 = first.optimum()
        x2, f2 = second.optimum()
        assert abs(f1 - f2) <= 1e-10
        assert np.linalg.norm(first.gradient(x1)) <= 1e-12
        assert np.linalg.norm(x1 - x2) <= 1e-10


class TestGradientOracle:
    @pytest.mark.parametrize("which", ["quadratic", "ridge", "logistic"])
    def test_gradient_matches_central_differences(self, which):
        rng = np.random.default_rng(42)
        a, y_real, y_pm = random_glm_data(rng)
        if which == "quadratic":
            g = rng.standard_normal((9, 18))
            obj = Quadratic(g @ g.T / 18 + 0.2 * np.eye(9), rng.standard_normal(9))
        elif which == "ridge":
            obj = ridge(a, y_real, lam=0.4)
        else:
            obj = logistic(a, y_pm, lam=0.4)
        for _ in range(10):
            x = rng.standard_normal(obj.n)
            g_fd = central_diff_gradient(obj, x)
            g_an = obj.gradient(x)
            assert np.linalg.norm(g_fd - g_an) <= 1e-5 * max(1.0, np.linalg.norm(g_an))


class TestOptimumIsMinimum:
    @pytest.mark.parametrize("which", ["quadratic", "ridge", "logistic"])
    def test_no_probe_beats_the_optimum(self, which):
        rng = np.random.default_rng(11)
        a, y_real, y_pm = random_glm_data(rng)
        if which == "quadratic":
            g = rng.standard_normal((6, 12))
            obj = Quadratic(g @ g.T / 12 + 0.3 * np.eye(6), rng.standard_normal(6))
        elif which == "ridge":
            obj = ridge(a, y_real, lam=0.2)
        else:
            obj = logistic(a, y_pm, lam=0.2)
        x_star, f_star = obj.optimum()
        probes = x_star + rng.standard_normal((1000, obj.n))
        values = np.array([obj.value(p) for p in probes])
        assert np.all(values >= f_star - 1e-12)
