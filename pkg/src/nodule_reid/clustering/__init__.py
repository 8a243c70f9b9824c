"""Threshold clustering and the density / mode / exemplar baselines."""
from __future__ import annotations

from collections.abc import Callable, Mapping
from typing import Any

from ..core_types import Gallery, Partition
from ..similarity import Metric
from .affinity import AffinityResult, ConvergenceWarning, cluster_affinity_propagation
from .dbscan import DBSCANResult, cluster_dbscan
from .meanshift import MeanShiftResult, cluster_mean_shift
from .threshold import (
    ClusterConfig,
    cluster_gallery,
    cluster_threshold,
    cluster_threshold_distances,
    count_nodules,
    visit_order,
)

ALGORITHMS = ("threshold", "dbscan", "meanshift", "affinity")

DEFAULT_PARAMS: dict[str, dict[str, Any]] = {
    "threshold": {"tau": 0.5, "metric": "cosine", "mode": "fixpoint", "seed": 0, "order": "seeded_random"},
    "dbscan": {"eps": 0.5, "min_pts": 1, "metric": "euclidean"},
    "meanshift": {"bandwidth": 0.5},
    "affinity": {"damping": 0.9, "max_iter": 200, "preference": "median", "metric": "euclidean"},
}


def make_clusterer(algo: str, params: Mapping[str, Any] | None = None) -> Callable[..., Partition]:
    """Return ``features -> Partition`` for one of :data:`ALGORITHMS`.

    Missing parameters take the values in :data:`DEFAULT_PARAMS`.
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    p = {**DEFAULT_PARAMS[algo], **(params or {})}
    if algo == "threshold":
        config = ClusterConfig(
            tau=float(p["tau"]), metric=p["metric"], mode=p["mode"], seed=int(p["seed"]), order=p["order"]
        )
        return lambda X: cluster_threshold(X, config)
    if algo == "dbscan":
        return lambda X: cluster_dbscan(X, float(p["eps"]), int(p["min_pts"]), p["metric"]).partition
    if algo == "meanshift":
        return lambda X: cluster_mean_shift(X, float(p["bandwidth"])).partition
    return lambda X: cluster_affinity_propagation(
        X, float(p["damping"]), int(p["max_iter"]), p["preference"], p["metric"]
    ).partition


def cluster_gallery_with(gallery: Gallery, algo: str, params: Mapping[str, Any] | None = None) -> dict[str, Partition]:
    run = make_clusterer(algo, params)
    return {patient: run(gallery.embeddings[idx]) for patient, idx in gallery.patients().items()}


__all__ = [
    "ALGORITHMS",
    "DEFAULT_PARAMS",
    "AffinityResult",
    "ClusterConfig",
    "ConvergenceWarning",
    "DBSCANResult",
    "MeanShiftResult",
    "Metric",
    "cluster_affinity_propagation",
    "cluster_dbscan",
    "cluster_gallery",
    "cluster_gallery_with",
    "cluster_mean_shift",
    "cluster_threshold",
    "cluster_threshold_distances",
    "count_nodules",
    "make_clusterer",
    "visit_order",
]
