"""Affinity propagation baseline (responsibility/availability message passing)."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..core_types import Partition
from ..similarity import Metric, distance_matrix


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AffinityResult:
    partition: Partition
    exemplars: tuple[int, ...]
    converged: bool
    n_iter: int


def similarity_matrix(D: np.ndarray, preference: float | str = "median") -> np.ndarray:
    """``-d**2`` off the diagonal, the preference on it."""
    S = -(D ** 2)
    n = S.shape[0]
    if isinstance(preference, str):
        if preference != "median":
            raise ValueError(f"preference must be a number or 'median', got {preference!r}")
        off = S[~np.eye(n, dtype=bool)]
        pref = float(np.median(off)) if off.size else 0.0
    else:
        pref = float(preference)
    np.fill_diagonal(S, pref)
    return S


def cluster_affinity_propagation(
    features,
    damping: float = 0.9,
    max_iter: int = 200,
    preference: float | str = "median",
    metric: Metric | str = Metric.EUCLIDEAN,
    convergence_iter: int = 15,
    seed: int = 0,
) -> AffinityResult:
    if not 0.5 <= damping < 1:
        raise ValueError(f"damping must lie in [0.5, 1), got {damping!r}")
    if max_iter < 1:
        raise ValueError(f"max_iter must be >= 1, got {max_iter!r}")
    X = np.asarray(features, dtype=np.float64)
    n = X.shape[0] if X.ndim == 2 else 0
    if n == 0:
        return AffinityResult(Partition(()), (), True, 0)
    D = distance_matrix(X, metric)
    if n == 1 or not D.any():
        # identical points: every message is tied, one cluster by definition
        return AffinityResult(Partition.whole(n), (0,), True, 0)

    S = similarity_matrix(D, preference)
    # tiny seeded jitter breaks exact ties between candidate exemplars
    rng = np.random.default_rng(seed)
    S = S + (np.finfo(float).eps * S + np.finfo(float).tiny * 100) * rng.standard_normal((n, n))

    R = np.zeros((n, n))
    A = np.zeros((n, n))
    rows = np.arange(n)
    history = np.zeros((n, convergence_iter), dtype=bool)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        AS = A + S
        best = AS.argmax(axis=1)
        first = AS[rows, best]
        AS[rows, best] = -np.inf
        second = AS.max(axis=1)
        R_new = S - first[:, None]
        R_new[rows, best] = S[rows, best] - second
        R = damping * R + (1 - damping) * R_new

        Rp = np.maximum(R, 0)
        Rp[rows, rows] = R[rows, rows]
        A_new = Rp.sum(axis=0)[None, :] - Rp
        self_avail = A_new[rows, rows].copy()
        A_new = np.minimum(A_new, 0)
        A_new[rows, rows] = self_avail
        A = damping * A + (1 - damping) * A_new

        is_exemplar = (A[rows, rows] + R[rows, rows]) > 0
        history[:, (it - 1) % convergence_iter] = is_exemplar
        if it >= convergence_iter:
            stable = history.all(axis=1) | ~history.any(axis=1)
            if stable.all() and is_exemplar.any():
                converged = True
                break

    exemplars = np.flatnonzero((A[rows, rows] + R[rows, rows]) > 0)
    if not converged:
        warnings.warn(
            f"affinity propagation did not converge in {max_iter} iterations", ConvergenceWarning, stacklevel=2
        )
    if exemplars.size == 0:
        return AffinityResult(Partition.singletons(n), (), converged, it)

    assign = S[:, exemplars].argmax(axis=1)
    assign[exemplars] = np.arange(exemplars.size)
    # move each exemplar to the member that best represents its cluster
    refined = []
    for k in range(exemplars.size):
        members = np.flatnonzero(assign == k)
        refined.append(int(members[S[np.ix_(members, members)].sum(axis=0).argmax()]))
    exemplars = np.array(sorted(set(refined)))
    assign = S[:, exemplars].argmax(axis=1)
    assign[exemplars] = np.arange(exemplars.size)
    return AffinityResult(Partition.from_labels(assign), tuple(int(e) for e in exemplars), converged, it)
