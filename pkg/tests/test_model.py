import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import fd_gradient, fd_jacobian, random_batch, random_coef
from lprestream import model
from lprestream.errors import DimensionMismatch, NonPositiveResponse, Overflow


def single(y, x):
    return model.Batch(x=np.atleast_2d(np.asarray(x, dtype=float)), y=np.array([y]))


class TestBatch:
    def test_rejects_non_positive_response(self):
        with pytest.raises(NonPositiveResponse):
            model.Batch(x=[[1.0]], y=[0.0])
        with pytest.raises(NonPositiveResponse):
            model.Batch(x=[[1.0], [1.0], [1.0]], y=[1.0, 2.0, -1.0])

    def test_rejects_shape_problems(self):
        with pytest.raises(DimensionMismatch):
            model.Batch(x=[[1.0], [1.0]], y=[1.0])
        with pytest.raises(DimensionMismatch):
            model.Batch(x=[1.0, 2.0], y=[1.0, 2.0])
        with pytest.raises(ValueError):
            model.Batch(x=np.zeros((0, 2)), y=np.zeros(0))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            model.Batch(x=[[np.inf]], y=[1.0])
        with pytest.raises(ValueError):
            model.Batch(x=[[1.0]], y=[np.nan])

    def test_arrays_are_frozen_copies(self):
        src = np.array([[1.0, 2.0]])
        b = model.Batch(x=src, y=np.array([1.5]))
        src[0, 0] = 99.0
        assert b.x[0, 0] == 1.0
        with pytest.raises(ValueError):
            b.x[0, 0] = 5.0
        with pytest.raises(ValueError):
            b.y[0] = 5.0

    def test_index_validation(self):
        with pytest.raises(ValueError):
            model.Batch(x=[[1.0]], y=[1.0], index=0)


class TestLoss:
    def test_perfect_fit_at_zero(self):
        assert model.lpre_loss(single(1.0, [1.0]), np.zeros(1)) == 0.0

    def test_exact_fit_unit_error(self):
        assert model.lpre_loss(single(math.e, [1.0]), np.array([1.0])) <= 1e-12

    def test_hand_value(self):
        # y=2 at beta=0: 2 + 1/2 - 2 = 0.5 exactly (dyadic arithmetic).
        assert model.lpre_loss(single(2.0, [1.0]), np.zeros(1)) == 0.5

    def test_never_negative(self, rng):
        for _ in range(100):
            b = random_batch(rng)
            assert model.lpre_loss(b, random_coef(rng, b.p)) >= 0.0

    def test_convexity_witness(self, rng):
        for _ in range(200):
            b = random_batch(rng)
            b1 = random_coef(rng, b.p)
            b2 = random_coef(rng, b.p)
            t = float(rng.uniform(0.01, 0.99))
            lhs = model.lpre_loss(b, t * b1 + (1 - t) * b2)
            rhs = t * model.lpre_loss(b, b1) + (1 - t) * model.lpre_loss(b, b2)
            assert lhs <= rhs + 1e-9


class TestScore:
    def test_symmetric_residual_is_zero(self):
        assert_allclose(model.score(single(1.0, [1.0]), np.zeros(1)), [0.0], atol=0)

    def test_hand_value(self):
        got = model.score(single(2.0, [1.0]), np.zeros(1))
        assert_allclose(got, [-1.5], atol=0)
        fd = fd_gradient(lambda b: model.lpre_loss(single(2.0, [1.0]), b), np.zeros(1))
        assert_allclose(got, fd, atol=1e-8)

    def test_matches_finite_differences(self, rng):
        for _ in range(200):
            b = random_batch(rng)
            beta = random_coef(rng, b.p)
            got = model.score(b, beta)
            fd = fd_gradient(lambda v: model.lpre_loss(b, v), beta)
            denom = 1.0 + np.max(np.abs(got))
            assert np.max(np.abs(got - fd)) / denom <= 1e-5


class TestInformation:
    def test_hand_value(self):
        got = model.information(single(2.0, [1.0]), np.zeros(1))
        assert_allclose(got, [[2.5]], atol=0)
        fd = fd_jacobian(lambda b: model.score(single(2.0, [1.0]), b), np.zeros(1))
        assert_allclose(got, fd, rtol=1e-6)

    def test_rank_one_structure(self):
        got = model.information(single(1.0, [1.0, 0.0]), np.zeros(2))
        assert_allclose(got, [[2.0, 0.0], [0.0, 0.0]], atol=0)

    def test_exactly_symmetric(self, rng):
        for _ in range(50):
            b = random_batch(rng)
            m = model.information(b, random_coef(rng, b.p))
            assert np.array_equal(m, m.T)

    def test_matches_finite_differences(self, rng):
        for _ in range(200):
            b = random_batch(rng)
            beta = random_coef(rng, b.p)
            got = model.information(b, beta)
            fd = fd_jacobian(lambda v: model.score(b, v), beta)
            denom = 1.0 + np.max(np.abs(got))
            assert np.max(np.abs(got - fd)) / denom <= 1e-4


class TestCmat:
    def test_hand_value(self):
        assert_allclose(model.cmat(single(2.0, [1.0]), np.zeros(1)), [[2.25]], atol=0)

    def test_zero_residual(self):
        assert_allclose(model.cmat(single(1.0, [1.0]), np.zeros(1)), [[0.0]], atol=0)

    def test_replication_additivity(self, rng):
        x = rng.standard_normal((1, 3))
        y = np.exp(rng.uniform(-1, 1, size=1))
        one = model.Batch(x=x, y=y)
        m = 7
        many = model.Batch(x=np.repeat(x, m, axis=0), y=np.repeat(y, m))
        beta = random_coef(rng, 3)
        assert_allclose(model.cmat(many, beta), m * model.cmat(one, beta), rtol=1e-12)

    def test_positive_semidefinite(self, rng):
        for _ in range(100):
            b = random_batch(rng)
            m = model.cmat(b, random_coef(rng, b.p))
            v = rng.standard_normal(b.p)
            assert v @ m @ v >= -1e-12 * (v @ v)


class TestAdditivity:
    def test_concatenation_matches_sum(self, rng):
        for _ in range(50):
            p = int(rng.integers(1, 6))
            b1 = random_batch(rng, n=int(rng.integers(2, 15)), p=p)
            b2 = random_batch(rng, n=int(rng.integers(2, 15)), p=p)
            both = model.Batch(
                x=np.vstack([b1.x, b2.x]), y=np.concatenate([b1.y, b2.y])
            )
            beta = random_coef(rng, p)
            s1, s2, s12 = (model.summarize(b, beta) for b in (b1, b2, both))
            for part, whole in (
                (s1.score + s2.score, s12.score),
                (s1.info + s2.info, s12.info),
                (s1.cmat + s2.cmat, s12.cmat),
            ):
                scale = 1.0 + np.max(np.abs(whole))
                assert np.max(np.abs(part - whole)) / scale <= 1e-10
            assert s12.n == s1.n + s2.n


class TestOverflow:
    def test_large_predictor_raises(self):
        with pytest.raises(Overflow):
            model.lpre_loss(single(1.0, [1.0]), np.array([701.0]))
        with pytest.raises(Overflow):
            model.score(single(1.0, [2.0]), np.array([400.0]))

    def test_boundary_is_inclusive(self):
        # |eta| exactly at the guard still evaluates.
        assert model.lpre_loss(single(1.0, [1.0]), np.array([700.0])) > 0.0

    def test_extreme_response_raises(self):
        with pytest.raises(Overflow):
            model.lpre_loss(single(1e-300, [1.0]), np.array([200.0]))


class TestSummarize:
    def test_consistent_with_individual_ops(self, rng):
        b = random_batch(rng, n=10, p=3)
        beta = random_coef(rng, 3)
        s = model.summarize(b, beta)
        assert np.array_equal(s.score, model.score(b, beta))
        assert np.array_equal(s.info, model.information(b, beta))
        assert np.array_equal(s.cmat, model.cmat(b, beta))
        assert s.n == b.n
        assert_allclose(s.at_beta, beta, atol=0)
