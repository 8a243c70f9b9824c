"""Threshold clustering of tracklet features.

A cluster starts from one seed feature and absorbs every remaining feature
that lies closer than ``tau`` to any feature already in the cluster. Two
variants are provided:

``literal``
    One pass over the remaining features per cluster, in the configured
    order. Whether a feature joins can depend on the order in which the
    pass visits it.
``fixpoint``
    The pass is repeated until nothing more is absorbed, which gives the
    connected components of the graph with an edge wherever ``d < tau``.
    Independent of seed and order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..core_types import Gallery, Partition
from ..similarity import Metric, distance_matrix

MODES = ("literal", "fixpoint")
ORDERS = ("seeded_random", "input_order")


@dataclass(frozen=True)
class ClusterConfig:
    tau: float
    metric: Metric = Metric.COSINE
    mode: str = "fixpoint"
    seed: int = 0
    order: str = "seeded_random"

    def __post_init__(self):
        if not (isinstance(self.tau, (int, float)) and math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be finite and positive, got {self.tau!r}")
        object.__setattr__(self, "metric", Metric.parse(self.metric))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}, got {self.order!r}")


def visit_order(n: int, config: ClusterConfig) -> np.ndarray:
    """Order in which literal mode seeds and scans features.

    With ``seeded_random`` the first remaining entry of a uniform random
    permutation is a uniform draw from the remaining features, which is how
    the random seed selection is realised reproducibly.
    """
    if config.order == "input_order":
        return np.arange(n, dtype=np.int64)
    return np.random.default_rng(config.seed).permutation(n).astype(np.int64)


def cluster_threshold_distances(D: np.ndarray, config: ClusterConfig) -> Partition:
    """Threshold clustering from a precomputed distance matrix."""
    n = D.shape[0]
    if n == 0:
        return Partition(())
    D = np.ascontiguousarray(D, dtype=np.float64)
    if config.mode == "fixpoint":
        labels = kernels.threshold_components(D, float(config.tau))
    else:
        labels = kernels.threshold_literal(D, float(config.tau), visit_order(n, config))
    return Partition.from_labels(labels)


def cluster_threshold(features, config: ClusterConfig) -> Partition:
    X = np.asarray(features, dtype=np.float64)
    if X.size == 0:
        return Partition(())
    return cluster_threshold_distances(distance_matrix(X, config.metric), config)


def cluster_gallery(gallery: Gallery, config: ClusterConfig) -> dict[str, Partition]:
    """Cluster each patient's tracklets separately.

    Partitions index into the patient's own records, in gallery order.
    """
    out = {}
    for patient, idx in gallery.patients().items():
        out[patient] = cluster_threshold(gallery.embeddings[idx], config)
    return out


def count_nodules(gallery: Gallery, config: ClusterConfig) -> dict[str, int]:
    return {patient: len(p) for patient, p in cluster_gallery(gallery, config).items()}
