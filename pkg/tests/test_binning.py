import math

import numpy as np
import pytest

from easecp.binning import BinModel, assign_bin, compute_ease, t_binning
from easecp.data import ScoreDataset, cosine_ease, regression_ease
from easecp.errors import ValidationError
from easecp.scores import rank_table
from easecp.metrics import spearman

from conftest import random_prob_rows


class TestEase:
    def test_identical_transformed_gives_exactly_one(self, rng):
        probs = random_prob_rows(rng, 10, 4)
        transformed = np.repeat(probs[:, None, :], 3, axis=1)
        assert np.all(cosine_ease(probs, transformed) == 1.0)

    def test_orthogonal_gives_zero(self):
        probs = np.array([[1.0, 0.0]])
        transformed = np.array([[[0.0, 1.0]]])
        assert cosine_ease(probs, transformed)[0] == 0.0

    def test_half_half_vs_onehot(self):
        # cos((.5,.5),(1,0)) = 0.5 / (sqrt(0.5)*1)
        want = 0.5 / math.sqrt(0.5)
        got = cosine_ease(np.array([[0.5, 0.5]]), np.array([[[1.0, 0.0]]]))[0]
        assert got == pytest.approx(want, abs=1e-12)

    def test_invariant_to_transform_permutation(self, rng):
        probs = random_prob_rows(rng, 15, 5)
        transformed = random_prob_rows(rng, 15 * 4, 5).reshape(15, 4, 5)
        base = cosine_ease(probs, transformed)
        perm = rng.permutation(4)
        assert np.allclose(cosine_ease(probs, transformed[:, perm, :]), base, atol=1e-15)

    def test_range_clamped(self, rng):
        probs = random_prob_rows(rng, 200, 6)
        transformed = random_prob_rows(rng, 200 * 3, 6).reshape(200, 3, 6)
        e = cosine_ease(probs, transformed)
        assert np.all((e >= 0) & (e <= 1))

    def test_compute_ease_prefers_transformed_block(self, rng):
        probs = random_prob_rows(rng, 8, 3)
        transformed = np.repeat(probs[:, None, :], 2, axis=1)
        ds = ScoreDataset(probs=probs, labels=np.zeros(8, dtype=int),
                          transformed_probs=transformed)
        assert np.all(compute_ease(ds) == 1.0)

    def test_compute_ease_errors_without_either(self, rng):
        ds = ScoreDataset(probs=random_prob_rows(rng, 5, 3), labels=np.zeros(5, dtype=int))
        with pytest.raises(ValidationError, match="neither"):
            compute_ease(ds)

    def test_regression_ease(self):
        mu = np.array([0.0, 1.0])
        tmu = np.array([[0.0, 0.0], [2.0, 0.0]])
        e = regression_ease(mu, tmu)
        assert e[0] == pytest.approx(1.0)
        assert e[1] == pytest.approx((math.exp(-1) + math.exp(-1)) / 2)


class TestTBinning:
    def test_even_split(self):
        bm = t_binning(np.arange(6) / 6.0, 3)
        assert [len(s) for s in bm.index_sets] == [2, 2, 2]

    def test_uneven_split_7_3(self):
        bm = t_binning(np.arange(7) / 7.0, 3)
        assert [len(s) for s in bm.index_sets] == [2, 2, 3]

    def test_floor_formula_exhaustive_small(self):
        for n in range(1, 40):
            for b in range(1, min(n, 12) + 1):
                bm = t_binning(np.linspace(0, 1, n), b)
                sizes = [len(s) for s in bm.index_sets]
                want = [(i * n) // b - ((i - 1) * n) // b for i in range(1, b + 1)]
                assert sizes == want
                assert max(sizes) - min(sizes) <= 1

    def test_sorted_by_ease_then_index(self):
        ease = np.array([0.5, 0.2, 0.5, 0.1])
        bm = t_binning(ease, 2)
        assert list(bm.index_sets[0]) == [3, 1]
        assert list(bm.index_sets[1]) == [0, 2]  # tie at 0.5 broken by index

    def test_partition_property(self, rng):
        ease = rng.uniform(0, 1, 57)
        bm = t_binning(ease, 8)
        all_idx = np.concatenate(bm.index_sets)
        assert sorted(all_idx) == list(range(57))

    def test_edges_start_at_zero_and_increase(self, rng):
        ease = rng.uniform(0, 1, 40)
        bm = t_binning(ease, 5)
        assert bm.lower_edges[0] == 0.0
        assert np.all(np.diff(bm.lower_edges) >= 0)

    def test_b_greater_than_n_rejected(self):
        with pytest.raises(ValidationError):
            t_binning(np.array([0.1, 0.2]), 3)

    def test_b_must_be_positive(self):
        with pytest.raises(ValidationError):
            t_binning(np.array([0.1, 0.2]), 0)


class TestAssignBin:
    def test_exactly_at_second_edge(self):
        bm = t_binning(np.array([0.1, 0.2, 0.6, 0.8]), 2)
        assert bm.lower_edges[1] == 0.6
        assert assign_bin(bm, 0.6) == 1  # half-open edges: l_2 belongs to bin 2

    def test_below_all_values(self):
        bm = t_binning(np.array([0.3, 0.4, 0.6, 0.8]), 2)
        assert assign_bin(bm, 0.05) == 0

    def test_at_top_of_range(self):
        bm = t_binning(np.array([0.1, 0.4, 0.6, 0.8]), 4)
        assert assign_bin(bm, 1.0) == 3

    def test_degenerate_equal_ease_maps_to_last_bin(self):
        # with all calibration ease equal the value intervals collapse and
        # the half-open rule sends the tied value to the last bin
        bm = t_binning(np.full(6, 0.5), 3)
        assert [len(s) for s in bm.index_sets] == [2, 2, 2]
        assert assign_bin(bm, 0.5) == 2
        assert assign_bin(bm, 0.4) == 0

    def test_round_trip_with_distinct_ease(self, rng):
        for _ in range(30):
            n = int(rng.integers(5, 60))
            b = int(rng.integers(1, min(n, 10) + 1))
            ease = rng.permutation(n) / n  # distinct values
            bm = t_binning(ease, b)
            for bin_id, idx_set in enumerate(bm.index_sets):
                for i in idx_set:
                    assert assign_bin(bm, ease[i]) == bin_id

    def test_vectorized_assign_matches_scalar(self, rng):
        ease = rng.uniform(0, 1, 30)
        bm = t_binning(ease, 4)
        values = rng.uniform(-0.1, 1.1, 50)
        vec = bm.assign(values)
        assert all(vec[i] == assign_bin(bm, v) for i, v in enumerate(values))


class TestCoupledTrend:
    def test_bin_mean_rank_decreases_with_ease(self, coupled_ds):
        ranks = rank_table(coupled_ds).rank_of(coupled_ds.labels)
        bm = t_binning(compute_ease(coupled_ds), 20)
        mean_ease = [float(np.mean(compute_ease(coupled_ds)[i])) for i in bm.index_sets]
        mean_rank = [float(np.mean(ranks[i])) for i in bm.index_sets]
        rho, _ = spearman(mean_ease, mean_rank)
        assert rho <= -0.8
