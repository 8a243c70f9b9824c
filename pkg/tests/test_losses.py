import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nodule_reid import build_gallery
from nodule_reid.core_types import TrackletRecord
from nodule_reid.losses import (
    BatchError,
    LabeledPairBatch,
    PKBatch,
    classification_loss,
    combined_classification_objective,
    combined_verification_objective,
    contrastive_loss,
    hardest_triplets,
    one_hot,
    sample_pk_batch,
    softmax,
    trihard_loss,
    verification_cross_entropy,
)

from oracles import DIST, binary_ce_mp, cross_entropy_mp, euclid, softmax_mp, trihard_bruteforce


def random_batch(rng, P=4, K=3, dim=8, scale=1.0):
    labels = np.repeat(np.arange(P), K)
    return PKBatch(P, K, rng.normal(0, scale, size=(P * K, dim)), labels)


class TestSoftmax:
    def test_symmetric(self):
        assert softmax([0.0, 0.0]).tolist() == [0.5, 0.5]

    def test_large_scores_no_overflow(self):
        p = softmax([1000.0, 0.0])
        assert np.all(np.isfinite(p))
        assert p[0] == pytest.approx(1.0) and p[1] < 1e-300

    def test_extended_precision(self):
        np.testing.assert_allclose(softmax([1.0, 2.0, 3.0]), softmax_mp([1, 2, 3]), rtol=0, atol=1e-12)

    def test_empty(self):
        with pytest.raises(ValueError):
            softmax([])

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
    @settings(max_examples=100, deadline=None)
    def test_sums_to_one(self, xs):
        p = softmax(xs)
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(p >= 0) and np.all(p <= 1)


class TestTriHard:
    def test_identical_embeddings(self):
        batch = PKBatch(3, 4, np.ones((12, 5)), np.repeat(np.arange(3), 4))
        assert trihard_loss(batch, 0.3) == pytest.approx(12 * 0.3, abs=1e-12)

    def test_margin_satisfied(self):
        emb = np.array([[0.0, 0.0], [0.0, 0.0], [10.0, 0.0], [10.0, 0.0]])
        assert trihard_loss(PKBatch(2, 2, emb, [0, 0, 1, 1]), 0.3) == 0.0

    def test_four_point_hand_instance(self):
        emb = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0], [6.0, 0.0]])
        batch = PKBatch(2, 2, emb, [0, 0, 1, 1])
        expected = trihard_bruteforce(emb.tolist(), [0, 0, 1, 1], 0.3, euclid)
        assert trihard_loss(batch, 0.3) == pytest.approx(expected, abs=1e-12)
        assert expected == 0.0

    @pytest.mark.parametrize("metric", ["euclidean", "cosine"])
    def test_matches_bruteforce(self, rng, metric):
        for _ in range(20):
            P, K = int(rng.integers(2, 6)), int(rng.integers(2, 4))
            batch = random_batch(rng, P, K, int(rng.integers(2, 10)), scale=0.5)
            ref = trihard_bruteforce(batch.embeddings.tolist(), batch.labels.tolist(), 1.0, DIST[metric])
            assert trihard_loss(batch, 1.0, metric) == pytest.approx(ref, abs=1e-9)

    def test_normalized_is_mean(self, rng):
        batch = random_batch(rng)
        assert trihard_loss(batch, 0.5, normalize=True) * 12 == pytest.approx(trihard_loss(batch, 0.5))

    def test_ties_lowest_index(self):
        batch = PKBatch(2, 2, np.zeros((4, 2)), [0, 0, 1, 1])
        h = hardest_triplets(batch)
        assert h.hardest_positive.tolist() == [0, 0, 2, 2]
        assert h.hardest_negative.tolist() == [2, 2, 0, 0]

    def test_permutation_invariance(self, rng):
        batch = random_batch(rng, 4, 3)
        perm = rng.permutation(12)
        relabel = rng.permutation(4)
        other = PKBatch(4, 3, batch.embeddings[perm], relabel[batch.labels[perm]])
        assert trihard_loss(other, 0.7) == pytest.approx(trihard_loss(batch, 0.7), abs=1e-12)

    def test_separated_margin_zero(self, rng):
        centres = np.repeat(np.arange(3)[:, None] * 10.0, 4, axis=0)
        emb = centres + rng.uniform(0, 1, size=(12, 1))
        assert trihard_loss(PKBatch(3, 4, emb, np.repeat(np.arange(3), 4)), 0.0) == 0.0

    @pytest.mark.parametrize("P, K", [(1, 4), (4, 1)])
    def test_too_small(self, P, K):
        with pytest.raises(BatchError):
            trihard_loss(PKBatch(P, K, np.zeros((P * K, 2)), np.repeat(np.arange(P), K)))

    def test_negative_margin(self, rng):
        with pytest.raises(ValueError):
            trihard_loss(random_batch(rng), -0.1)

    def test_finite_difference_consistency(self, rng):
        checked = 0
        while checked < 10:
            batch = random_batch(rng, 3, 3, 4)
            base = hardest_triplets(batch, 2.0)
            if not np.all(base.terms > 1e-3):
                continue
            i, c = int(rng.integers(0, 9)), int(rng.integers(0, 4))

            def f(h):
                emb = batch.embeddings.copy()
                emb[i, c] += h
                b = PKBatch(3, 3, emb, batch.labels)
                mined = hardest_triplets(b, 2.0)
                same = np.array_equal(mined.hardest_positive, base.hardest_positive) and np.array_equal(
                    mined.hardest_negative, base.hardest_negative
                )
                return trihard_loss(b, 2.0), same and np.all(mined.terms > 0)

            vals = [f(h) for h in (1e-4, -1e-4, 1e-5, -1e-5)]
            if not all(ok for _, ok in vals):
                continue
            d4 = (vals[0][0] - vals[1][0]) / 2e-4
            d5 = (vals[2][0] - vals[3][0]) / 2e-5
            if abs(d4) < 1e-3:
                continue
            assert abs(d5 / d4 - 1) < 0.01
            checked += 1


class TestClassification:
    def test_peaked(self):
        logits = np.eye(4) * 100
        assert classification_loss(logits, np.eye(4)) < 1e-40

    @pytest.mark.parametrize("C", [2, 5, 17])
    def test_uniform_log_c(self, C):
        assert classification_loss(np.zeros((6, C)), one_hot(np.arange(6) % C, C)) == pytest.approx(
            math.log(C), abs=1e-12
        )

    def test_extended_precision(self, rng):
        logits = rng.normal(0, 3, size=(8, 5))
        y = one_hot(rng.integers(0, 5, size=8), 5)
        assert classification_loss(logits, y) == pytest.approx(cross_entropy_mp(logits.tolist(), y.tolist()), abs=1e-10)

    def test_not_one_hot(self):
        with pytest.raises(BatchError):
            classification_loss(np.zeros((2, 3)), [[1, 1, 0], [0, 0, 1]])

    def test_one_class(self):
        with pytest.raises(BatchError):
            classification_loss(np.zeros((2, 1)), np.ones((2, 1)))

    def test_combined_is_sum(self, rng):
        batch = random_batch(rng)
        logits = rng.normal(size=(12, 4))
        y = one_hot(batch.labels, 4)
        total = combined_classification_objective(batch, logits, y, 0.3)
        assert total == classification_loss(logits, y) + trihard_loss(batch, 0.3)

    def test_combined_both_zero(self):
        emb = np.array([[0.0], [0.0], [10.0], [10.0]])
        batch = PKBatch(2, 2, emb, [0, 0, 1, 1])
        logits = np.array([[800.0, 0.0], [800.0, 0.0], [0.0, 800.0], [0.0, 800.0]])
        assert combined_classification_objective(batch, logits, one_hot([0, 0, 1, 1], 2)) == 0.0


def pair_batch(first, second, y, logits=None):
    return LabeledPairBatch(np.asarray(first, float), np.asarray(second, float), np.asarray(y), logits)


class TestContrastive:
    def test_zero_positive(self, rng):
        a = rng.normal(size=(5, 3))
        assert contrastive_loss(pair_batch(a, a, [1] * 5)) == 0.0

    def test_negatives_beyond_margin(self):
        assert contrastive_loss(pair_batch([[0.0], [0.0]], [[1.0], [3.0]], [0, 0]), 1.0) == 0.0

    def test_hand_built(self):
        first = [[0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [2.0, 0.0]]
        second = [[3.0, 4.0], [0.3, 0.4], [1.0, 1.0], [2.0, 0.5]]
        y = [1, 0, 0, 1]
        m = 1.0
        terms = []
        for a, b, t in zip(first, second, y):
            d = euclid(a, b)
            terms.append(d * d if t else max(0.0, m - d))
        expected = sum(terms) / (2 * 4)
        assert expected == pytest.approx((25 + 0.5 + 1.0 + 0.25) / 8)
        assert contrastive_loss(pair_batch(first, second, y), m) == pytest.approx(expected, abs=1e-15)

    def test_decomposes(self, rng):
        a, b = rng.normal(size=(10, 4)), rng.normal(size=(10, 4))
        y = np.array([1, 0] * 5)
        full = contrastive_loss(pair_batch(a, b, y), 3.0)
        pos = contrastive_loss(pair_batch(a[y == 1], b[y == 1], y[y == 1]), 3.0)
        neg = contrastive_loss(pair_batch(a[y == 0], b[y == 0], y[y == 0]), 3.0)
        assert full == pytest.approx((pos * 5 + neg * 5) / 10, abs=1e-15)

    def test_empty(self):
        with pytest.raises(BatchError):
            contrastive_loss(pair_batch(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0)))

    def test_bad_labels(self):
        with pytest.raises(BatchError):
            pair_batch([[0.0]], [[1.0]], [2])


class TestVerification:
    def test_peaked(self):
        logits = np.array([[0.0, 100.0], [100.0, 0.0]])
        assert verification_cross_entropy(pair_batch([[0.0], [0.0]], [[0.0], [5.0]], [1, 0], logits)) < 1e-40

    def test_uniform(self):
        b = pair_batch(np.zeros((3, 2)), np.ones((3, 2)), [1, 0, 1], np.zeros((3, 2)))
        assert verification_cross_entropy(b) == pytest.approx(math.log(2), abs=1e-15)

    def test_extended_precision(self, rng):
        logits = rng.normal(0, 2, size=(6, 2))
        y = rng.integers(0, 2, size=6)
        b = pair_batch(np.zeros((6, 1)), np.zeros((6, 1)), y, logits)
        assert verification_cross_entropy(b) == pytest.approx(binary_ce_mp(logits.tolist(), y.tolist()), abs=1e-10)

    def test_missing_logits(self):
        with pytest.raises(BatchError):
            verification_cross_entropy(pair_batch([[0.0]], [[0.0]], [1]))

    def test_combined_is_sum(self, rng):
        b = pair_batch(rng.normal(size=(6, 3)), rng.normal(size=(6, 3)), [1, 0, 1, 0, 0, 1], rng.normal(size=(6, 2)))
        assert combined_verification_objective(b, 2.0) == verification_cross_entropy(b) + contrastive_loss(b, 2.0)


def nodule_gallery(sizes):
    records = []
    for k, size in enumerate(sizes):
        for t in range(size):
            records.append(TrackletRecord(f"n{k}-t{t}", f"p{k % 3}", f"n{k}", 1, [float(k), float(t)]))
    return build_gallery(records)


class TestSamplePK:
    def test_two_nodules(self):
        batch = sample_pk_batch(nodule_gallery([3, 3]), 2, 2, seed=1)
        assert batch.embeddings.shape == (4, 2)
        assert np.bincount(batch.labels).tolist() == [2, 2]

    def test_replacement_for_small_nodule(self):
        batch = sample_pk_batch(nodule_gallery([1, 5]), 2, 4, seed=0)
        single = [i for i, tid in enumerate(batch.tracklet_ids) if tid.startswith("n0-")]
        assert len(single) == 4
        assert {batch.tracklet_ids[i] for i in single} == {"n0-t0"}

    def test_without_replacement_when_possible(self):
        batch = sample_pk_batch(nodule_gallery([6, 6]), 2, 4, seed=3)
        assert len(set(batch.tracklet_ids)) == 8

    def test_deterministic(self):
        g = nodule_gallery([4, 4, 4])
        a, b = sample_pk_batch(g, 2, 3, seed=9), sample_pk_batch(g, 2, 3, seed=9)
        assert a.tracklet_ids == b.tracklet_ids

    def test_too_few_nodules(self):
        with pytest.raises(BatchError):
            sample_pk_batch(nodule_gallery([3, 3]), 3, 2)

    def test_uniform_class_frequency(self):
        g = nodule_gallery([3] * 10)
        P, draws = 2, 100
        counts = np.zeros(10)
        for seed in range(draws):
            batch = sample_pk_batch(g, P, 2, seed=seed)
            for tid in batch.tracklet_ids[::2]:
                counts[int(tid.split("-")[0][1:])] += 1
        p = P / 10
        mean, sd = draws * p, math.sqrt(draws * p * (1 - p))
        assert np.all(np.abs(counts - mean) <= 3 * sd)
