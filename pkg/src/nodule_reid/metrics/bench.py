"""Accuracy and wall-clock comparison of clustering algorithms, plus grid tuning."""
from __future__ import annotations

import platform
import statistics
import time
from collections.abc import Mapping, Sequence
from typing import Any, NamedTuple

import numpy as np

from .. import kernels
from ..clustering import DEFAULT_PARAMS, make_clusterer
from ..core_types import Gallery
from .pairwise import ClusterScores, evaluate_gallery_clusters


class BenchRow(NamedTuple):
    algorithm: str
    precision: float
    recall: float
    f_score: float
    median_seconds: float
    """Median over repetitions of the summed per-patient clustering time."""
    median_patient_seconds: float
    """Median over all (repetition, patient) clustering calls."""
    params: dict


def _resolve(algorithms) -> list[tuple[str, dict]]:
    if isinstance(algorithms, Mapping):
        return [(name, dict(params or {})) for name, params in algorithms.items()]
    return [(name, {}) for name in algorithms]


def timing_benchmark(
    gallery: Gallery, algorithms: Sequence[str] | Mapping[str, Mapping[str, Any]], repetitions: int = 5
) -> list[BenchRow]:
    """Cluster every patient with every algorithm ``repetitions`` times.

    Only the clustering call is timed. Accuracy comes from the first
    repetition; the algorithms are deterministic, so later ones agree.
    """
    if repetitions < 3:
        raise ValueError(f"repetitions must be >= 3, got {repetitions}")
    if not gallery.has_ground_truth:
        raise ValueError("benchmarking needs nodule_id ground truth on every record")
    groups = [(p, np.ascontiguousarray(gallery.embeddings[idx])) for p, idx in gallery.patients().items()]
    rows = []
    for name, params in _resolve(algorithms):
        run = make_clusterer(name, params)
        totals, calls, clusters = [], [], None
        for rep in range(repetitions):
            result = {}
            total = 0.0
            for patient, X in groups:
                t0 = time.perf_counter()
                result[patient] = run(X)
                dt = time.perf_counter() - t0
                total += dt
                calls.append(dt)
            totals.append(total)
            if rep == 0:
                clusters = result
        scores = evaluate_gallery_clusters(gallery, clusters)
        rows.append(
            BenchRow(
                name, scores.precision, scores.recall, scores.f_score,
                statistics.median(totals), statistics.median(calls),
                {**DEFAULT_PARAMS[name], **params},
            )
        )
    return rows


def machine_info() -> dict[str, str]:
    return {
        "python": platform.python_version(),
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "system": platform.system(),
        "kernel_backend": kernels.BACKEND,
    }


class TuneResult(NamedTuple):
    value: Any
    scores: ClusterScores
    grid: list[tuple[Any, float]]
    """``(value, f_score)`` for every grid point."""


def tune_parameter(
    gallery: Gallery,
    algo: str,
    param: str,
    grid: Sequence[Any],
    base_params: Mapping[str, Any] | None = None,
) -> TuneResult:
    """Pick the grid value with the best pairwise F-score; the first wins ties."""
    if not grid:
        raise ValueError("empty tuning grid")
    best = None
    table = []
    for value in grid:
        params = {**(base_params or {}), param: value}
        run = make_clusterer(algo, params)
        clusters = {p: run(gallery.embeddings[idx]) for p, idx in gallery.patients().items()}
        scores = evaluate_gallery_clusters(gallery, clusters)
        table.append((value, scores.f_score))
        if best is None or scores.f_score > best[1].f_score:
            best = (value, scores)
    return TuneResult(best[0], best[1], table)


TUNED_PARAMETER = {"threshold": "tau", "dbscan": "eps", "meanshift": "bandwidth", "affinity": "preference"}
