"""Training losses: frozen closed-form values, gradient audits,
invariances, and the deduplicated-form equivalence argument."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lds.losses import (LossConfig, finite_diff_check, loss_all, loss_ce,
                        loss_label, loss_lg)


def duplicated_form_lg(v, ids, u, counts, tau):
    """The sample-label loss with the label terms written out once per
    sample of each class (counts[r] identical terms per class r), the
    long way, as an independent oracle for the deduplicated reading."""
    total = 0.0
    for t in range(v.shape[0]):
        scores = v[t] @ u.T / tau
        num = counts[ids[t]] * math.exp(scores[ids[t]])
        den = sum(counts[r] * math.exp(scores[r]) for r in range(u.shape[0]))
        total += -math.log(num / den)
    return total / v.shape[0]


def random_batch(rng, n=5, k=2, m=2, d=6, scale=0.8):
    c = n * (k + m)
    v = scale * rng.normal(size=(c, d))
    u = scale * rng.normal(size=(n, d))
    ids = np.concatenate([np.repeat(np.arange(n), k),
                          np.repeat(np.arange(n), m)])
    return v, ids, u


class TestLossLG:
    def test_single_sample_value(self):
        v = np.array([[1.0, 0.0]])
        u = np.array([[1.0, 0.0], [0.0, 1.0]])
        res = loss_lg(v, [0], u, 1.0)
        assert res.value == pytest.approx(math.log((math.e + 1) / math.e),
                                          abs=1e-15)

    def test_equidistant_gives_ln2(self):
        v = np.array([[1.0, 1.0]])
        u = np.array([[2.0, 0.0], [0.0, 2.0]])
        res = loss_lg(v, [0], u, 0.7)
        assert res.value == pytest.approx(math.log(2.0), abs=1e-15)

    def test_gradients_vs_finite_differences(self):
        for trial in range(5):
            rng = np.random.default_rng(trial)
            v, ids, u = random_batch(rng)

            def fn(v_, u_):
                res = loss_lg(v_, ids, u_, 0.5)
                return res.value, (res.grad_v, res.grad_u)

            assert finite_diff_check(fn, [v, u], 1e-4) < 1e-6

    def test_matches_duplicated_form(self):
        # with equal per-class counts the repeated label terms cancel,
        # so the deduplicated implementation must agree exactly
        rng = np.random.default_rng(42)
        v, ids, u = random_batch(rng, n=4, k=3, m=2)
        counts = np.bincount(ids)
        assert np.all(counts == counts[0])
        expected = duplicated_form_lg(v, ids, u, counts, 0.3)
        assert loss_lg(v, ids, u, 0.3).value == pytest.approx(expected,
                                                              rel=1e-12)

    def test_duplicated_form_differs_on_unequal_counts(self):
        # sanity of the equivalence argument: with unequal counts the
        # two readings genuinely part ways
        rng = np.random.default_rng(1)
        v = rng.normal(size=(3, 4))
        ids = np.array([0, 0, 1])
        u = rng.normal(size=(2, 4))
        unequal = duplicated_form_lg(v, ids, u, np.array([2, 1]), 1.0)
        assert loss_lg(v, ids, u, 1.0).value != pytest.approx(unequal,
                                                              rel=1e-9)

    def test_nonnegative(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v, ids, u = random_batch(rng, n=3, k=1, m=1)
            assert loss_lg(v, ids, u, 0.2).value >= 0.0

    def test_batch_reorder_invariance(self):
        rng = np.random.default_rng(4)
        v, ids, u = random_batch(rng)
        perm = rng.permutation(len(ids))
        a = loss_lg(v, ids, u, 0.5).value
        b = loss_lg(v[perm], ids[perm], u, 0.5).value
        assert a == pytest.approx(b, rel=1e-13)

    def test_class_relabel_invariance(self):
        rng = np.random.default_rng(5)
        v, ids, u = random_batch(rng)
        relabel = rng.permutation(u.shape[0])
        a = loss_lg(v, ids, u, 0.5).value
        b = loss_lg(v, relabel[ids], u[np.argsort(relabel)], 0.5).value
        assert a == pytest.approx(b, rel=1e-13)

    def test_temperature_homogeneity(self):
        # tau -> tau/s equals scaling every inner product by s
        rng = np.random.default_rng(6)
        v, ids, u = random_batch(rng)
        s = 3.0
        a = loss_lg(v, ids, u, 0.5 / s).value
        b = loss_lg(s * v, ids, u, 0.5).value
        assert a == pytest.approx(b, rel=1e-12)

    def test_bad_tau(self):
        v, ids, u = random_batch(np.random.default_rng(0))
        with pytest.raises(ValueError):
            loss_lg(v, ids, u, 0.0)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            loss_lg(np.zeros((1, 3)), [0], np.zeros((2, 4)), 1.0)

    def test_descent_after_one_step(self):
        # a small gradient step must strictly reduce the loss
        for trial in range(10):
            rng = np.random.default_rng(100 + trial)
            v, ids, u = random_batch(rng)
            res = loss_lg(v, ids, u, 0.5)
            after = loss_lg(v - 1e-3 * res.grad_v, ids,
                            u - 1e-3 * res.grad_u, 0.5)
            assert after.value < res.value


class TestLossLabel:
    def test_single_label_is_exactly_zero(self):
        res = loss_label(np.array([[2.0, -1.0, 0.5]]), 0.3)
        assert res.value == 0.0
        np.testing.assert_array_equal(res.grad_u, np.zeros((1, 3)))

    def test_two_orthonormal_labels(self):
        u = np.array([[1.0, 0.0], [0.0, 1.0]])
        res = loss_label(u, 1.0)
        # both rows contribute -log(e / (e + 1)) by symmetry
        assert res.value == pytest.approx(math.log((math.e + 1) / math.e),
                                          abs=1e-15)

    def test_gradient_vs_finite_differences(self):
        for trial in range(5):
            rng = np.random.default_rng(200 + trial)
            u = 0.8 * rng.normal(size=(5, 6))

            def fn(u_):
                res = loss_label(u_, 0.5)
                return res.value, (res.grad_u,)

            assert finite_diff_check(fn, [u], 1e-4) < 1e-6

    def test_nonnegative(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            u = rng.normal(size=(4, 5))
            assert loss_label(u, 0.4).value >= 0.0


class TestLossAll:
    def test_value_is_sum(self):
        rng = np.random.default_rng(8)
        v, ids, u = random_batch(rng)
        total = loss_all(v, ids, u, 0.5)
        assert total.value == loss_lg(v, ids, u, 0.5).value + \
            loss_label(u, 0.5).value

    def test_label_gradient_is_sum(self):
        rng = np.random.default_rng(9)
        v, ids, u = random_batch(rng)
        total = loss_all(v, ids, u, 0.5)
        np.testing.assert_array_equal(
            total.grad_u,
            loss_lg(v, ids, u, 0.5).grad_u + loss_label(u, 0.5).grad_u)

    def test_degenerate_single_class(self):
        v = np.array([[0.5, 0.5]])
        u = np.array([[0.5, 0.5]])
        total = loss_all(v, [0], u, 1.0)
        assert total.value == loss_lg(v, [0], u, 1.0).value


class TestLossCE:
    def test_query_at_prototype_orthogonal_others(self):
        n = 4
        protos = np.eye(n)
        q = protos[:1].copy()
        res = loss_ce(q, [0], protos, 1.0)
        expected = -math.log(math.e / (math.e + n - 1))
        assert res.value == pytest.approx(expected, abs=1e-14)

    def test_identical_prototypes_uniform(self):
        protos = np.tile([1.0, 2.0], (5, 1))
        q = np.array([[0.3, -0.7]])
        res = loss_ce(q, [2], protos, 0.1)
        assert res.value == pytest.approx(math.log(5.0), abs=1e-12)

    def test_gradient_vs_finite_differences(self):
        for trial in range(5):
            rng = np.random.default_rng(300 + trial)
            q = 0.8 * rng.normal(size=(6, 5))
            p = 0.8 * rng.normal(size=(3, 5))
            ids = rng.integers(0, 3, size=6)

            def fn(q_, p_):
                res = loss_ce(q_, ids, p_, 0.5)
                return res.value, (res.grad_v, res.grad_u)

            assert finite_diff_check(fn, [q, p], 1e-4) < 1e-6

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError):
            loss_ce(np.zeros((1, 2)), [0], np.eye(2), 1.0)


class TestFiniteDiffCheck:
    def test_quadratic_calibration(self):
        a = np.arange(1.0, 7.0).reshape(2, 3)

        def fn(x):
            return float((x * x).sum()), (2 * x,)

        assert finite_diff_check(fn, [a], 1e-4) < 1e-9

    def test_tiny_step_suffers_cancellation(self):
        a = np.arange(1.0, 7.0).reshape(2, 3)

        def fn(x):
            return float((x * x).sum()), (2 * x,)

        good = finite_diff_check(fn, [a.copy()], 1e-4)
        bad = finite_diff_check(fn, [a.copy()], 1e-12)
        assert bad > 100 * max(good, 1e-15)

    def test_rejects_bad_step(self):
        with pytest.raises(ValueError):
            finite_diff_check(lambda x: (0.0, (x,)), [np.ones(2)], 0.0)


class TestLossConfig:
    def test_defaults(self):
        cfg = LossConfig()
        assert cfg.temperature == 0.1 and cfg.kind == "lg_label"

    @pytest.mark.parametrize("kwargs", [
        {"temperature": 0.0}, {"temperature": -1.0}, {"kind": "nope"}])
    def test_invalid(self, kwargs):
        with pytest.raises(Exception):
            LossConfig(**kwargs)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 5.0))
def test_losses_nonnegative_property(seed, tau):
    rng = np.random.default_rng(seed)
    v, ids, u = random_batch(rng, n=3, k=1, m=2, d=4)
    assert loss_lg(v, ids, u, tau).value >= 0.0
    assert loss_label(u, tau).value >= 0.0
