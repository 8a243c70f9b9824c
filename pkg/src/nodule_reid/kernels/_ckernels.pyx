# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: distance matrices and threshold-graph clustering."""

import numpy as np

from libc.math cimport sqrt

cdef enum:
    COSINE = 0
    EUCLIDEAN = 1
    SMALL_N = 64


cdef inline double _dot(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0
    cdef Py_ssize_t k = 0
    while k + 4 <= n:
        s0 += a[k] * b[k]
        s1 += a[k + 1] * b[k + 1]
        s2 += a[k + 2] * b[k + 2]
        s3 += a[k + 3] * b[k + 3]
        k += 4
    while k < n:
        s0 += a[k] * b[k]
        k += 1
    return (s0 + s1) + (s2 + s3)


cdef inline double _sqdiff(const double* a, const double* b, Py_ssize_t n) noexcept nogil:
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0, d
    cdef Py_ssize_t k = 0
    while k + 4 <= n:
        d = a[k] - b[k]
        s0 += d * d
        d = a[k + 1] - b[k + 1]
        s1 += d * d
        d = a[k + 2] - b[k + 2]
        s2 += d * d
        d = a[k + 3] - b[k + 3]
        s3 += d * d
        k += 4
    while k < n:
        d = a[k] - b[k]
        s0 += d * d
        k += 1
    return (s0 + s1) + (s2 + s3)


def pairwise_distances(const double[:, ::1] X, int metric):
    cdef Py_ssize_t n = X.shape[0], e = X.shape[1], i, j
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] D = out
    cdef const double[:, ::1] G
    cdef double[::1] norms
    cdef double s, d
    if metric == COSINE and n <= SMALL_N:
        # numpy call overhead dominates for a handful of rows
        norms = np.empty(n, dtype=np.float64)
        with nogil:
            for i in range(n):
                norms[i] = sqrt(_dot(&X[i, 0], &X[i, 0], e))
            for i in range(n):
                for j in range(i + 1, n):
                    s = _dot(&X[i, 0], &X[j, 0], e) / (norms[i] * norms[j])
                    if s > 1.0:
                        s = 1.0
                    elif s < -1.0:
                        s = -1.0
                    d = 1.0 - s
                    D[i, j] = d
                    D[j, i] = d
    elif metric == COSINE:
        # the Gram product goes through BLAS; a hand loop cannot match its blocking
        arr = np.asarray(X)
        unit = arr / np.sqrt(np.einsum("ij,ij->i", arr, arr))[:, None]
        G = np.ascontiguousarray(unit @ unit.T)
        with nogil:
            for i in range(n):
                for j in range(i + 1, n):
                    s = G[i, j]
                    if s > 1.0:
                        s = 1.0
                    elif s < -1.0:
                        s = -1.0
                    d = 1.0 - s
                    D[i, j] = d
                    D[j, i] = d
    elif metric == EUCLIDEAN:
        with nogil:
            for i in range(n):
                for j in range(i + 1, n):
                    d = sqrt(_sqdiff(&X[i, 0], &X[j, 0], e))
                    D[i, j] = d
                    D[j, i] = d
    else:
        raise ValueError(f"unknown metric code {metric}")
    return out


def threshold_components(const double[:, ::1] D, double tau):
    """Connected components of the graph with an edge wherever D < tau."""
    cdef Py_ssize_t n = D.shape[0], i, j, top, u
    labels_arr = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] labels = labels_arr
    cdef long long[::1] stack = np.empty(max(n, 1), dtype=np.int64)
    cdef long long current = 0
    with nogil:
        for i in range(n):
            if labels[i] >= 0:
                continue
            labels[i] = current
            stack[0] = i
            top = 1
            while top > 0:
                top -= 1
                u = stack[top]
                for j in range(n):
                    if labels[j] < 0 and D[u, j] < tau:
                        labels[j] = current
                        stack[top] = j
                        top += 1
            current += 1
    return labels_arr


def threshold_literal(const double[:, ::1] D, double tau, const long long[::1] order):
    """Single-pass cluster growth exactly as the pseudocode reads.

    Each round takes the first remaining item of ``order`` as the seed, makes
    one pass over the rest in order and absorbs any item closer than ``tau``
    to a member already in the cluster (including members absorbed earlier
    in the same pass).
    """
    cdef Py_ssize_t n = order.shape[0], r, k, m, n_rem, n_next, size
    labels_arr = np.full(D.shape[0], -1, dtype=np.int64)
    cdef long long[::1] labels = labels_arr
    cdef long long[::1] remaining = np.array(order, dtype=np.int64)
    cdef long long[::1] members = np.empty(max(n, 1), dtype=np.int64)
    cdef long long current = 0, f
    cdef bint hit
    n_rem = n
    with nogil:
        while n_rem > 0:
            members[0] = remaining[0]
            labels[remaining[0]] = current
            size = 1
            n_next = 0
            for r in range(1, n_rem):
                f = remaining[r]
                hit = False
                for m in range(size):
                    if D[members[m], f] < tau:
                        hit = True
                        break
                if hit:
                    members[size] = f
                    size += 1
                    labels[f] = current
                else:
                    remaining[n_next] = f
                    n_next += 1
            n_rem = n_next
            current += 1
    return labels_arr
