"""Density-based clustering (DBSCAN) baseline."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..core_types import Partition
from ..similarity import Metric, distance_matrix

NOISE = -1


@dataclass(frozen=True)
class DBSCANResult:
    partition: Partition
    """Clusters with every noise point emitted as its own singleton."""
    noise: frozenset[int]
    labels: np.ndarray
    """Per-point cluster id, ``NOISE`` for noise points."""


def dbscan_labels(D: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Classic DBSCAN on a distance matrix.

    The eps-neighbourhood is ``d <= eps`` and includes the point itself, so
    with ``min_pts=1`` every point is a core point.
    """
    n = D.shape[0]
    labels = np.full(n, NOISE, dtype=np.int64)
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i]:
            continue
        visited[i] = True
        neighbours = np.flatnonzero(D[i] <= eps)
        if neighbours.size < min_pts:
            continue
        labels[i] = cluster
        seeds = deque(int(j) for j in neighbours if j != i)
        while seeds:
            j = seeds.popleft()
            if labels[j] == NOISE:
                labels[j] = cluster
            if visited[j]:
                continue
            visited[j] = True
            reach = np.flatnonzero(D[j] <= eps)
            if reach.size >= min_pts:
                seeds.extend(int(k) for k in reach if not visited[k] or labels[k] == NOISE)
        cluster += 1
    return labels


def cluster_dbscan(features, eps: float, min_pts: int = 1, metric: Metric | str = Metric.EUCLIDEAN) -> DBSCANResult:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps!r}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts!r}")
    X = np.asarray(features, dtype=np.float64)
    if X.size == 0:
        return DBSCANResult(Partition(()), frozenset(), np.zeros(0, dtype=np.int64))
    labels = dbscan_labels(distance_matrix(X, metric), eps, min_pts)
    noise = frozenset(int(i) for i in np.flatnonzero(labels == NOISE))
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab) if lab != NOISE else -(i + 2), []).append(i)
    return DBSCANResult(Partition.from_groups(groups.values()), noise, labels)
