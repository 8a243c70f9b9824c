"""Flat-kernel mean-shift baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core_types import Partition
from ..similarity import Metric


@dataclass(frozen=True)
class MeanShiftResult:
    partition: Partition
    modes: np.ndarray
    n_iter: int


def _cross_euclidean(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.empty((A.shape[0], B.shape[0]))
    rows = max(1, (1 << 22) // max(B.size, 1))
    for s in range(0, A.shape[0], rows):
        diff = A[s:s + rows, None, :] - B[None, :, :]
        out[s:s + rows] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def cluster_mean_shift(
    features,
    bandwidth: float,
    metric: Metric | str = Metric.EUCLIDEAN,
    convergence_eps: float | None = None,
    max_iter: int = 300,
) -> MeanShiftResult:
    """Shift every point to the mean of the data inside its window until it settles.

    Converged modes are merged greedily, best supported first: a mode is
    dropped when it lies within ``bandwidth`` of a mode already kept. Each
    point joins the kept mode nearest to the mode it converged to.
    """
    if Metric.parse(metric) is not Metric.EUCLIDEAN:
        raise ValueError("mean shift is defined in the vector space; use the euclidean metric")
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth!r}")
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0] if X.ndim == 2 else 0
    if n == 0:
        return MeanShiftResult(Partition(()), np.zeros((0, 0)), 0)
    tol = 1e-5 * bandwidth if convergence_eps is None else convergence_eps

    modes = X.copy()
    active = np.ones(n, dtype=bool)
    it = 0
    while active.any() and it < max_iter:
        it += 1
        idx = np.flatnonzero(active)
        window = _cross_euclidean(modes[idx], X) <= bandwidth
        counts = window.sum(axis=1)
        moved = counts > 0
        new = modes[idx].copy()
        new[moved] = (window[moved] @ X) / counts[moved, None]
        shift = np.sqrt(((new - modes[idx]) ** 2).sum(axis=1))
        modes[idx] = new
        active[idx[(shift < tol) | ~moved]] = False

    support = (_cross_euclidean(modes, X) <= bandwidth).sum(axis=1)
    ranked = sorted(range(n), key=lambda i: (-support[i], i))
    kept: list[int] = []
    for i in ranked:
        if not kept or _cross_euclidean(modes[i:i + 1], modes[kept]).min() >= bandwidth:
            kept.append(i)
    centers = modes[kept]
    labels = _cross_euclidean(modes, centers).argmin(axis=1)
    return MeanShiftResult(Partition.from_labels(labels), centers, it)
