"""The compiled and pure-numpy kernel backends must agree bit for bit."""

import numpy as np
import pytest

from easecp import _kernels_np as knp

kcy = pytest.importorskip("easecp._kernels_cy")


def rank_arrays(probs):
    order = np.argsort(-probs, axis=1, kind="stable").astype(np.int32)
    rank = np.empty_like(order)
    n, k = probs.shape
    np.put_along_axis(rank, order,
                      np.broadcast_to(np.arange(1, k + 1, dtype=np.int32), (n, k)), axis=1)
    return order, rank


class TestUniformParity:
    def test_matrix(self):
        for seed in (0, 1, 2**63 + 5, 12345):
            a = knp.keyed_uniform_matrix(seed, 200, 17)
            b = kcy.keyed_uniform_matrix(seed, 200, 17)
            assert np.array_equal(a, b)

    def test_true_label(self, rng):
        labels = rng.integers(0, 17, 300)
        a = knp.keyed_uniform_true(42, labels)
        b = kcy.keyed_uniform_true(42, labels)
        assert np.array_equal(a, b)

    def test_true_consistent_with_matrix(self, rng):
        labels = rng.integers(0, 9, 100)
        m = kcy.keyed_uniform_matrix(7, 100, 9)
        t = kcy.keyed_uniform_true(7, labels)
        assert np.array_equal(t, m[np.arange(100), labels])

    def test_uniformity_sanity(self):
        u = kcy.keyed_uniform_matrix(3, 2000, 10)
        assert 0.49 < u.mean() < 0.51
        assert u.min() >= 0.0 and u.max() < 1.0


class TestScoreParity:
    @pytest.mark.parametrize("kind", [0, 1, 2, 3])
    def test_score_matrix(self, kind, rng):
        for _ in range(20):
            n, k = int(rng.integers(1, 80)), int(rng.integers(2, 15))
            probs = rng.dirichlet(np.ones(k), size=n)
            order, rank = rank_arrays(probs)
            u = knp.keyed_uniform_matrix(9, n, k)
            a = knp.score_matrix(kind, probs, order, rank, u, 0.17, 2, 0.33)
            b = kcy.score_matrix(kind, np.ascontiguousarray(probs), order, rank, u,
                                 0.17, 2, 0.33)
            assert np.array_equal(a, b)

    @pytest.mark.parametrize("kind", [0, 1, 2, 3])
    def test_true_scores(self, kind, rng):
        n, k = 150, 11
        probs = rng.dirichlet(np.ones(k), size=n)
        order, rank = rank_arrays(probs)
        labels = rng.integers(0, k, n)
        ut = knp.keyed_uniform_true(9, labels)
        a = knp.true_scores(kind, probs, order, rank, labels, ut, 0.17, 2, 0.33)
        b = kcy.true_scores(kind, np.ascontiguousarray(probs), order, rank,
                            labels, ut, 0.17, 2, 0.33)
        assert np.array_equal(a, b)


class TestPropertyParity:
    def test_integer_valued(self, rng):
        d = rng.integers(1, 20, 500).astype(np.float64)
        s = rng.integers(0, 10, 500).astype(np.float64)
        for disjoint in (True, False):
            a = knp.property_count(d, s, 40, 300, 123, disjoint)
            b = kcy.property_count(d, s, 40, 300, 123, disjoint)
            assert a == b

    def test_float_valued(self, rng):
        d = rng.normal(size=500)
        s = rng.normal(size=500)
        a = knp.property_count(d, s, 30, 400, 55, True)
        b = kcy.property_count(d, s, 30, 400, 55, True)
        assert a == b

    def test_read_only_inputs_accepted(self, rng):
        d = rng.normal(size=100)
        s = rng.normal(size=100)
        d.flags.writeable = False
        s.flags.writeable = False
        assert kcy.property_count(d, s, 10, 50, 1, True) == \
            knp.property_count(d, s, 10, 50, 1, True)
