"""Prototypes, cosine-softmax scoring, and the ridge head."""

import math

import numpy as np
import pytest

from lds.metalearners import (Prototypes, classify_pn, compute_prototypes,
                              pn_probabilities, predict, rrml_fit,
                              rrml_predict, rrml_scores)


class TestPrototypes:
    def test_single_shot_identity(self):
        sup = np.array([[[3.0, -1.0]]])
        protos = compute_prototypes(sup, ("a",))
        np.testing.assert_array_equal(protos.vectors, [[3.0, -1.0]])

    def test_mean_of_two(self):
        sup = np.array([[[0.0, 0.0], [2.0, 2.0]]])
        np.testing.assert_array_equal(compute_prototypes(sup).vectors,
                                      [[1.0, 1.0]])

    def test_idempotent_on_equal_supports(self):
        sup = np.tile([1.5, 0.5], (2, 3, 1))
        np.testing.assert_array_equal(compute_prototypes(sup).vectors,
                                      [[1.5, 0.5], [1.5, 0.5]])


class TestClassifyPN:
    def test_collinear_vs_orthogonal(self):
        protos = Prototypes(np.array([[2.0, 0.0], [0.0, 3.0]]), ("a", "b"))
        probs = classify_pn(np.array([5.0, 0.0]), protos, tau=1.0)
        expected = math.e / (math.e + 1.0)
        assert probs[0] == pytest.approx(expected, abs=1e-12)

    def test_equidistant_uniform(self):
        protos = Prototypes(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0],
                                      [0.0, 0.0, 1.0]]), ("a", "b", "c"))
        q = np.array([1.0, 1.0, 1.0])
        np.testing.assert_allclose(classify_pn(q, protos, 0.3), 1 / 3,
                                   atol=1e-12)

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(0)
        protos = Prototypes(rng.normal(size=(6, 8)), tuple("abcdef"))
        probs = pn_probabilities(rng.normal(size=(10, 8)), protos, 0.1)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        protos_v = rng.normal(size=(4, 6))
        q = rng.normal(size=6)
        base = classify_pn(q, Prototypes(protos_v, tuple("abcd")), 0.2)
        scales = rng.uniform(0.1, 9.0, size=4)
        scaled = classify_pn(3.7 * q,
                             Prototypes(protos_v * scales[:, None],
                                        tuple("abcd")), 0.2)
        np.testing.assert_allclose(scaled, base, atol=1e-12)

    def test_zero_vector_rejected(self):
        protos = Prototypes(np.eye(2), ("a", "b"))
        with pytest.raises(ValueError):
            classify_pn(np.zeros(2), protos, 1.0)

    def test_separated_classes_are_perfect(self):
        # class separation beyond twice the within-class radius
        rng = np.random.default_rng(2)
        n, k, m, d = 4, 3, 10, 8
        means = 10.0 * np.eye(d)[:n]
        sup = means[:, None, :] + 0.5 * rng.normal(size=(n, k, d))
        protos = compute_prototypes(sup)
        queries = (means[:, None, :]
                   + 0.5 * rng.normal(size=(n, m, d))).reshape(n * m, d)
        preds = np.argmax(pn_probabilities(queries, protos, 0.1), axis=1)
        np.testing.assert_array_equal(preds, np.repeat(np.arange(n), m))


class TestPredict:
    def test_argmax(self):
        assert predict(np.array([0.2, 0.7, 0.1])) == 1

    def test_tie_breaks_low(self):
        assert predict(np.array([0.5, 0.5])) == 0

    def test_single_class(self):
        assert predict(np.array([1.0])) == 0

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        sims = rng.normal(size=7)
        assert predict(sims) == predict(np.exp(sims)) == predict(3 * sims + 1)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            predict(np.array([]))


class TestRidge:
    def test_identity_design_interpolates(self):
        n = 4
        x = np.eye(n)
        y = np.eye(n)
        model = rrml_fit(x, y, lam=0.0)
        np.testing.assert_allclose(model.weights, y, atol=1e-12)

    def test_shrinkage_monotone(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(6, 5))
        y = np.eye(6)[:, :3]
        norms = [np.linalg.norm(rrml_fit(x, y, lam).weights)
                 for lam in (0.1, 1.0, 10.0, 100.0, 1e4)]
        assert all(a > b for a, b in zip(norms, norms[1:]))
        assert norms[-1] < 1e-2

    def test_matches_primal_normal_equations(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(6, 4))
        y = np.eye(6)[:, :3]
        lam = 0.1
        dual = rrml_fit(x, y, lam).weights
        primal = np.linalg.solve(x.T @ x + lam * np.eye(4), x.T @ y)
        np.testing.assert_allclose(dual, primal, atol=1e-8)

    def test_normal_equation_residual(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            x = rng.normal(size=(8, 5))
            y = np.eye(8)[:, :4]
            lam = float(rng.uniform(0.05, 5.0))
            w = rrml_fit(x, y, lam).weights
            res = np.abs((x.T @ x + lam * np.eye(5)) @ w - x.T @ y).max()
            assert res < 1e-8

    def test_singular_at_zero_lambda(self):
        x = np.ones((3, 2))  # rank 1, XX^T singular
        y = np.eye(3)
        with pytest.raises(np.linalg.LinAlgError):
            rrml_fit(x, y, lam=0.0)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            rrml_fit(np.eye(2), np.eye(2), lam=-1.0)


class TestRidgePredict:
    def test_zero_weights_uniform(self):
        model = rrml_fit(np.eye(3), np.zeros((3, 3)), lam=1.0)
        np.testing.assert_allclose(model.weights, 0.0, atol=1e-15)
        np.testing.assert_allclose(rrml_predict(model, np.ones(3)), 1 / 3,
                                   atol=1e-12)

    def test_training_point_scores_own_class(self):
        x = np.eye(5)
        y = np.eye(5)
        model = rrml_fit(x, y, lam=0.0)
        for i in range(5):
            probs = rrml_predict(model, x[i])
            assert predict(probs) == i

    def test_probs_sum_to_one(self):
        rng = np.random.default_rng(7)
        model = rrml_fit(rng.normal(size=(6, 4)), np.eye(6)[:, :3], 0.5)
        probs = rrml_predict(model, rng.normal(size=4))
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)

    def test_dim_mismatch(self):
        model = rrml_fit(np.eye(3), np.eye(3), 1.0)
        with pytest.raises(ValueError):
            rrml_scores(model, np.ones((1, 5)))
