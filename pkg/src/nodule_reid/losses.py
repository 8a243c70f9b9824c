"""Metric-learning and classification objectives as plain numeric evaluators.

Nothing here computes gradients. The functions reproduce the value a
training pipeline should report for a given batch, so external training
code and extractor outputs can be regression-tested against them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .core_types import Gallery
from .similarity import Metric, distance_matrix

DEFAULT_TRIPLET_MARGIN = 0.3
DEFAULT_CONTRASTIVE_MARGIN = 1.0


class BatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PKBatch:
    """``P`` classes times ``K`` samples; row ``r`` of ``embeddings`` has class ``labels[r]``."""

    P: int
    K: int
    embeddings: np.ndarray
    labels: np.ndarray
    tracklet_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        lab = np.asarray(self.labels).astype(np.int64)
        if emb.ndim != 2 or emb.shape[0] != self.P * self.K:
            raise BatchError(f"expected {self.P}x{self.K} embeddings, got shape {emb.shape}")
        if lab.shape != (emb.shape[0],):
            raise BatchError(f"expected {emb.shape[0]} labels, got shape {lab.shape}")
        if not np.all(np.isfinite(emb)):
            raise BatchError("embeddings contain non-finite values")
        uniq, counts = np.unique(lab, return_counts=True)
        if uniq.size != self.P or np.any(counts != self.K):
            raise BatchError(f"labels must name exactly {self.P} classes with {self.K} samples each")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_arrays(cls, embeddings, labels) -> "PKBatch":
        lab = np.asarray(labels)
        uniq, counts = np.unique(lab, return_counts=True)
        if uniq.size == 0 or np.any(counts != counts[0]):
            raise BatchError("every class must contribute the same number of samples")
        return cls(int(uniq.size), int(counts[0]), embeddings, lab)


@dataclass(frozen=True, eq=False)
class LabeledPairBatch:
    """Embedding pairs with same-nodule bits ``y`` and optional 2-way logits."""

    first: np.ndarray
    second: np.ndarray
    y: np.ndarray
    logits: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.first, dtype=np.float64))
        b = np.atleast_2d(np.asarray(self.second, dtype=np.float64))
        y = np.asarray(self.y).astype(np.int64).reshape(-1)
        if a.shape != b.shape or a.shape[0] != y.shape[0]:
            raise BatchError(f"pair shapes disagree: {a.shape}, {b.shape}, {y.shape[0]} labels")
        if not np.all(np.isin(y, (0, 1))):
            raise BatchError("pair labels must be 0 or 1")
        object.__setattr__(self, "first", a)
        object.__setattr__(self, "second", b)
        object.__setattr__(self, "y", y)
        if self.logits is not None:
            lg = np.asarray(self.logits, dtype=np.float64)
            if lg.shape != (y.shape[0], 2):
                raise BatchError(f"expected ({y.shape[0]}, 2) logits, got {lg.shape}")
            object.__setattr__(self, "logits", lg)

    def __len__(self) -> int:
        return self.y.shape[0]

    def distances(self) -> np.ndarray:
        diff = self.first - self.second
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def softmax(scores) -> np.ndarray:
    x = np.asarray(scores, dtype=np.float64)
    if x.size == 0:
        raise ValueError("softmax of an empty vector")
    if not np.all(np.isfinite(x)):
        raise ValueError("softmax scores must be finite")
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(scores) -> np.ndarray:
    x = np.asarray(scores, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class HardTriplets(NamedTuple):
    terms: np.ndarray
    hardest_positive: np.ndarray
    hardest_negative: np.ndarray


def hardest_triplets(batch: PKBatch, margin: float = DEFAULT_TRIPLET_MARGIN, metric: Metric | str = Metric.EUCLIDEAN) -> HardTriplets:
    """Per-anchor hinge terms and the indices of the mined positive and negative.

    The positive search includes the anchor itself. Ties go to the lowest index.
    """
    if batch.P < 2 or batch.K < 2:
        raise BatchError(f"hard mining needs P >= 2 and K >= 2, got P={batch.P}, K={batch.K}")
    D = distance_matrix(batch.embeddings, metric)
    same = batch.labels[:, None] == batch.labels[None, :]
    pos = np.where(same, D, -np.inf).argmax(axis=1)
    neg = np.where(same, np.inf, D).argmin(axis=1)
    rows = np.arange(D.shape[0])
    terms = np.maximum(0.0, margin + D[rows, pos] - D[rows, neg])
    return HardTriplets(terms, pos, neg)


def trihard_loss(
    batch: PKBatch,
    margin: float = DEFAULT_TRIPLET_MARGIN,
    metric: Metric | str = Metric.EUCLIDEAN,
    normalize: bool = False,
) -> float:
    """Batch-hard triplet loss summed over all ``P*K`` anchors.

    ``normalize=True`` divides by ``P*K`` for pipelines that report the mean.
    """
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin!r}")
    terms = hardest_triplets(batch, margin, metric).terms
    total = float(terms.sum())
    return total / terms.size if normalize else total


def one_hot(indices, n_classes: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if np.any((idx < 0) | (idx >= n_classes)):
        raise BatchError(f"class index outside 0..{n_classes - 1}")
    out = np.zeros((idx.size, n_classes))
    out[np.arange(idx.size), idx] = 1.0
    return out


def classification_loss(logits, labels) -> float:
    """Mean cross-entropy of softmax(logits) against one-hot ``labels``."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_2d(np.asarray(labels, dtype=np.float64))
    if z.shape != y.shape:
        raise BatchError(f"logits {z.shape} and labels {y.shape} differ in shape")
    if z.shape[1] < 2:
        raise BatchError("classification needs at least 2 classes")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise BatchError("every label row must be one-hot")
    if not np.all(np.isfinite(z)):
        raise BatchError("logits must be finite")
    return float(-(y * log_softmax(z)).sum(axis=1).mean())


def combined_classification_objective(
    batch: PKBatch,
    logits,
    labels,
    margin: float = DEFAULT_TRIPLET_MARGIN,
    metric: Metric | str = Metric.EUCLIDEAN,
) -> float:
    return classification_loss(logits, labels) + trihard_loss(batch, margin, metric)


def contrastive_loss(batch: LabeledPairBatch, margin: float = DEFAULT_CONTRASTIVE_MARGIN) -> float:
    """``1/(2N) * sum(y*d**2 + (1-y)*max(0, m-d))`` with ``d`` the euclidean pair distance.

    The dissimilar-pair hinge is deliberately left unsquared.
    """
    if len(batch) == 0:
        raise BatchError("contrastive loss of an empty batch")
    if not margin > 0:
        raise ValueError(f"margin must be positive, got {margin!r}")
    d = batch.distances()
    y = batch.y
    terms = y * d ** 2 + (1 - y) * np.maximum(0.0, margin - d)
    return float(terms.sum() / (2 * len(batch)))


def verification_cross_entropy(batch: LabeledPairBatch) -> float:
    """Binary cross-entropy over the 2-way softmax; logit column 1 means "same nodule"."""
    if batch.logits is None:
        raise BatchError("verification cross-entropy needs per-pair logits")
    if len(batch) == 0:
        raise BatchError("cross-entropy of an empty batch")
    ls = log_softmax(batch.logits)
    y = batch.y
    return float(-(y * ls[:, 1] + (1 - y) * ls[:, 0]).mean())


def combined_verification_objective(batch: LabeledPairBatch, margin: float = DEFAULT_CONTRASTIVE_MARGIN) -> float:
    return verification_cross_entropy(batch) + contrastive_loss(batch, margin)


def sample_pk_batch(gallery: Gallery, P: int, K: int, seed: int = 0) -> PKBatch:
    """Draw ``P`` distinct nodules and ``K`` tracklets of each.

    Tracklets are drawn without replacement when the nodule has at least
    ``K`` of them and with replacement otherwise. Batch labels ``0..P-1``
    follow the order in which nodules were drawn.
    """
    if P < 1 or K < 1:
        raise ValueError(f"P and K must be positive, got P={P}, K={K}")
    nodules: dict[tuple[str, str], list[int]] = {}
    for i, rec in enumerate(gallery.records):
        if rec.nodule_id is None:
            raise BatchError(f"record {rec.tracklet_id!r} has no nodule_id")
        nodules.setdefault((rec.patient_id, rec.nodule_id), []).append(i)
    if len(nodules) < P:
        raise BatchError(f"gallery has {len(nodules)} nodules, cannot draw P={P}")
    groups = list(nodules.values())
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for label, g in enumerate(rng.choice(len(groups), size=P, replace=False)):
        members = groups[int(g)]
        picked = rng.choice(members, size=K, replace=len(members) < K)
        rows.extend(int(i) for i in picked)
        labels.extend([label] * K)
    return PKBatch(
        P, K, gallery.embeddings[rows], np.array(labels), tuple(gallery.records[i].tracklet_id for i in rows)
    )
