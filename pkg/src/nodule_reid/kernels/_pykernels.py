"""Pure numpy versions of the compiled kernels.

Same signatures and results as ``_ckernels``; distances agree to rounding.
"""
import numpy as np

COSINE = 0
EUCLIDEAN = 1


def pairwise_distances(X, metric):
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, e = X.shape
    if metric == COSINE:
        unit = X / np.sqrt(np.einsum("ij,ij->i", X, X))[:, None]
        sim = np.clip(unit @ unit.T, -1.0, 1.0)
        upper = np.triu(1.0 - sim, 1)
    elif metric == EUCLIDEAN:
        # direct differences, not the Gram identity, so near-duplicates keep their precision
        upper = np.zeros((n, n))
        for i in range(n - 1):
            diff = X[i + 1:] - X[i]
            upper[i, i + 1:] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    else:
        raise ValueError(f"unknown metric code {metric}")
    return upper + upper.T


def threshold_components(D, tau):
    adj = np.asarray(D) < tau
    n = adj.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    current = 0
    for i in range(n):
        if labels[i] >= 0:
            continue
        labels[i] = current
        frontier = np.zeros(n, dtype=bool)
        frontier[i] = True
        while frontier.any():
            reach = adj[frontier].any(axis=0) & (labels < 0)
            labels[reach] = current
            frontier = reach
        current += 1
    return labels


def threshold_literal(D, tau, order):
    D = np.asarray(D)
    labels = np.full(D.shape[0], -1, dtype=np.int64)
    remaining = [int(i) for i in order]
    current = 0
    while remaining:
        members = [remaining[0]]
        labels[remaining[0]] = current
        rest = []
        for f in remaining[1:]:
            if (D[members, f] < tau).any():
                members.append(f)
                labels[f] = current
            else:
                rest.append(f)
        remaining = rest
        current += 1
    return labels
