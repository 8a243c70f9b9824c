"""Similarity and distance kernels between feature vectors."""
from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np

from . import kernels
from .core_types import Gallery


class Metric(str, enum.Enum):
    COSINE = "cosine_distance"
    EUCLIDEAN = "euclidean"

    @classmethod
    def parse(cls, value: "Metric | str") -> "Metric":
        if isinstance(value, cls):
            return value
        aliases = {"cosine": cls.COSINE, "cosine_distance": cls.COSINE, "euclidean": cls.EUCLIDEAN}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown metric {value!r}; expected one of {sorted(aliases)}") from None

    @property
    def code(self) -> int:
        return kernels.COSINE if self is Metric.COSINE else kernels.EUCLIDEAN


class MetricError(ValueError):
    """Inputs invalid for the requested metric (zero norm, shape mismatch)."""


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise MetricError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def cosine_similarity(a, b) -> float:
    a, b = _pair(a, b)
    na = np.sqrt(a @ a)
    nb = np.sqrt(b @ b)
    if na == 0.0 or nb == 0.0:
        raise MetricError("cosine similarity of a zero-norm vector is undefined")
    return float(min(1.0, max(-1.0, (a @ b) / (na * nb))))


def distance(metric: Metric | str, a, b) -> float:
    metric = Metric.parse(metric)
    if metric is Metric.COSINE:
        return 1.0 - cosine_similarity(a, b)
    a, b = _pair(a, b)
    diff = a - b
    return float(np.sqrt(diff @ diff))


def distance_matrix(features, metric: Metric | str = Metric.COSINE) -> np.ndarray:
    """Symmetric matrix of pairwise distances between the rows of ``features``.

    The diagonal is exactly zero and ``D == D.T`` holds bitwise.
    """
    metric = Metric.parse(metric)
    X = np.ascontiguousarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise MetricError(f"expected a 2-D array of features, got shape {X.shape}")
    if X.shape[0] == 0:
        return np.zeros((0, 0))
    if metric is Metric.COSINE:
        zero = np.flatnonzero(np.einsum("ij,ij->i", X, X) == 0.0)
        if zero.size:
            raise MetricError(f"feature {int(zero[0])} has zero norm; cosine distance is undefined")
    return kernels.pairwise_distances(X, metric.code)


def pairwise_distance_matrix(gallery: Gallery, metric: Metric | str = Metric.COSINE) -> np.ndarray:
    return distance_matrix(gallery.embeddings, metric)


class Verification(NamedTuple):
    same_nodule: int
    score: float


def verify_pair(a, b, threshold: float) -> Verification:
    """Same-nodule decision by cosine similarity; ``score >= threshold`` is positive."""
    score = cosine_similarity(a, b)
    return Verification(int(score >= threshold), score)
