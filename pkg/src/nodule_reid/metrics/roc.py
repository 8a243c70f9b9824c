"""ROC analysis of scored tracklet pairs.

Covers the ROC curve and its AUC, operating-point accuracy / sensitivity /
specificity with Wilson intervals, and DeLong's nonparametric variance and
paired comparison of two correlated AUCs.

DeLong placement values are half-integer counts divided by a class size, so
variances and covariances are accumulated on the doubled integer counts and
rounded to float once at the end. Results are therefore exact to the last
bit and do not depend on summation order.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from fractions import Fraction
from statistics import NormalDist
from typing import NamedTuple, Optional

import numpy as np


class ScoredPair(NamedTuple):
    pair_id: Optional[str]
    id_a: str
    id_b: str
    score: float
    label: int


class RocError(ValueError):
    pass


def _arrays(pairs: Sequence[ScoredPair]) -> tuple[np.ndarray, np.ndarray]:
    scores = np.array([p.score for p in pairs], dtype=np.float64)
    labels = np.array([p.label for p in pairs], dtype=np.int64)
    if not np.all(np.isfinite(scores)):
        raise RocError("scores must be finite")
    if not np.all((labels == 0) | (labels == 1)):
        raise RocError("labels must be 0 or 1")
    return scores, labels


def _require_both_classes(labels: np.ndarray, minimum: int = 1) -> tuple[int, int]:
    m = int(labels.sum())
    n = int(labels.size - m)
    if m < minimum or n < minimum:
        raise RocError(f"need at least {minimum} positive and {minimum} negative pairs, got {m} and {n}")
    return m, n


class RocCurve(NamedTuple):
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    """Descending; the first entry is ``+inf`` for the (0, 0) corner."""
    auc: float

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))


def roc_curve(pairs: Sequence[ScoredPair]) -> RocCurve:
    """ROC over every distinct score; tied scores move together in one step.

    The trapezoid area is accumulated in integer counts, so it equals the
    Mann-Whitney concordance fraction (ties counted one half) up to a single
    final rounding.
    """
    scores, labels = _arrays(pairs)
    m, n = _require_both_classes(labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.r_[0, np.cumsum(y)[last_of_group]]
    fp = np.r_[0, np.cumsum(1 - y)[last_of_group]]
    twice_area = sum(int(dfp) * int(a + b) for dfp, a, b in zip(np.diff(fp), tp[1:], tp[:-1]))
    auc = float(Fraction(twice_area, 2 * m * n))
    thresholds = np.r_[np.inf, s[last_of_group]]
    return RocCurve(fp / n, tp / m, thresholds, auc)


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given the mean of the ranks they span."""
    x = np.asarray(x)
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    starts = np.r_[0, np.flatnonzero(np.diff(xs) != 0) + 1]
    ends = np.r_[starts[1:], xs.size]
    ranks_sorted = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    out = np.empty(x.size, dtype=np.float64)
    out[order] = ranks_sorted
    return out


class Placements(NamedTuple):
    """Doubled DeLong placement counts for one model.

    ``pos[i]`` is twice the number of negatives scored below positive ``i``
    plus the number tied with it; ``neg[j]`` is the same count of positives
    scored above negative ``j``. Dividing by ``2n`` and ``2m`` gives the
    structural components.
    """

    pos: np.ndarray
    neg: np.ndarray
    m: int
    n: int

    @property
    def v10(self) -> np.ndarray:
        return self.pos / (2 * self.n)

    @property
    def v01(self) -> np.ndarray:
        return self.neg / (2 * self.m)

    @property
    def auc_fraction(self) -> Fraction:
        return Fraction(int(self.pos.sum()), 2 * self.m * self.n)


def placements(scores: np.ndarray, labels: np.ndarray) -> Placements:
    m, n = _require_both_classes(labels)
    pos_scores = scores[labels == 1]
    neg_scores = scores[labels == 0]
    tz = midranks(np.r_[pos_scores, neg_scores])
    tx = midranks(pos_scores)
    ty = midranks(neg_scores)
    pos = np.rint(2 * (tz[:m] - tx)).astype(np.int64)
    below = np.rint(2 * (tz[m:] - ty)).astype(np.int64)
    return Placements(pos, 2 * m - below, m, n)


def auc_mann_whitney(pairs: Sequence[ScoredPair]) -> float:
    """AUC from midranks (the Mann-Whitney U statistic over ``m*n``)."""
    return float(placements(*_arrays(pairs)).auc_fraction)


def _exact_cov(a: list[np.ndarray], size: int, scale: int) -> list[list[Fraction]]:
    """Sample covariance (ddof 1) of ``a[r] / scale`` across models, exactly."""
    ints = [[int(v) for v in arr] for arr in a]
    sums = [sum(col) for col in ints]
    k = len(ints)
    out = [[Fraction(0)] * k for _ in range(k)]
    for r in range(k):
        for s in range(r, k):
            cross = sum(x * y for x, y in zip(ints[r], ints[s]))
            val = Fraction(size * cross - sums[r] * sums[s], size * (size - 1) * scale * scale)
            out[r][s] = out[s][r] = val
    return out


class DeLongCovariance(NamedTuple):
    aucs: list[Fraction]
    s10: list[list[Fraction]]
    s01: list[list[Fraction]]
    m: int
    n: int

    def auc_covariance(self) -> list[list[Fraction]]:
        k = len(self.aucs)
        return [[self.s10[r][s] / self.m + self.s01[r][s] / self.n for s in range(k)] for r in range(k)]

    def as_float(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.auc_covariance()])


def delong_covariance(labels: np.ndarray, *model_scores: np.ndarray) -> DeLongCovariance:
    labels = np.asarray(labels, dtype=np.int64)
    m, n = _require_both_classes(labels, minimum=2)
    pl = [placements(np.asarray(s, dtype=np.float64), labels) for s in model_scores]
    s10 = _exact_cov([p.pos for p in pl], m, 2 * n)
    s01 = _exact_cov([p.neg for p in pl], n, 2 * m)
    return DeLongCovariance([p.auc_fraction for p in pl], s10, s01, m, n)


def _z_quantile(level: float) -> float:
    if not 0 < level < 1:
        raise ValueError(f"confidence level must lie in (0, 1), got {level!r}")
    return NormalDist().inv_cdf(0.5 + level / 2)


class AucInterval(NamedTuple):
    auc: float
    lower: float
    upper: float
    variance: float
    level: float


def auc_confidence_interval(pairs: Sequence[ScoredPair], level: float = 0.95) -> AucInterval:
    """DeLong variance of the AUC and a normal interval clipped to [0, 1]."""
    scores, labels = _arrays(pairs)
    cov = delong_covariance(labels, scores)
    auc = float(cov.aucs[0])
    var = float(cov.auc_covariance()[0][0])
    half = _z_quantile(level) * math.sqrt(var)
    return AucInterval(auc, max(0.0, auc - half), min(1.0, auc + half), var, level)


class DeLongResult(NamedTuple):
    auc_a: float
    auc_b: float
    z: float
    p_value: float
    variance: float
    """Variance of the AUC difference."""
    degenerate: bool
    """Nonzero AUC difference with zero variance; z is infinite."""


def _aligned(a: Sequence[ScoredPair], b: Sequence[ScoredPair]) -> None:
    if len(a) != len(b):
        raise RocError(f"pair lists differ in length: {len(a)} vs {len(b)}")
    for k, (pa, pb) in enumerate(zip(a, b)):
        if (pa.pair_id, pa.id_a, pa.id_b, pa.label) != (pb.pair_id, pb.id_a, pb.id_b, pb.label):
            raise RocError(f"pair {k} differs between the two models: {pa.pair_id!r} vs {pb.pair_id!r}")


def delong_test(pairs_a: Sequence[ScoredPair], pairs_b: Sequence[ScoredPair]) -> DeLongResult:
    """Two-sided DeLong test of AUC(a) == AUC(b) on the same pairs."""
    _aligned(pairs_a, pairs_b)
    scores_a, labels = _arrays(pairs_a)
    scores_b, _ = _arrays(pairs_b)
    cov = delong_covariance(labels, scores_a, scores_b)
    c = cov.auc_covariance()
    diff = cov.aucs[0] - cov.aucs[1]
    var = c[0][0] + c[1][1] - 2 * c[0][1]
    auc_a, auc_b = float(cov.aucs[0]), float(cov.aucs[1])
    if diff == 0:
        return DeLongResult(auc_a, auc_b, 0.0, 1.0, float(var), False)
    if var <= 0:
        return DeLongResult(auc_a, auc_b, math.copysign(math.inf, diff), 0.0, float(var), True)
    z = float(diff) / math.sqrt(float(var))
    return DeLongResult(auc_a, auc_b, z, math.erfc(abs(z) / math.sqrt(2)), float(var), False)


class Proportion(NamedTuple):
    estimate: float
    lower: float
    upper: float
    successes: int
    trials: int


def wilson_interval(successes: int, trials: int, level: float = 0.95) -> Proportion:
    if trials <= 0:
        raise ValueError("Wilson interval needs at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes {successes} outside 0..{trials}")
    z = _z_quantile(level)
    p = successes / trials
    z2n = z * z / trials
    centre = (p + z2n / 2) / (1 + z2n)
    half = z / (1 + z2n) * math.sqrt(p * (1 - p) / trials + z2n / (4 * trials))
    # the bounds are exactly 0 / 1 at the extremes; pin them against rounding
    lower = 0.0 if successes == 0 else max(0.0, min(p, centre - half))
    upper = 1.0 if successes == trials else min(1.0, max(p, centre + half))
    return Proportion(p, lower, upper, successes, trials)


class OperatingPoint(NamedTuple):
    threshold: float
    accuracy: Proportion
    sensitivity: Proportion
    specificity: Proportion
    tp: int
    fp: int
    tn: int
    fn: int


def operating_point(pairs: Sequence[ScoredPair], threshold: float, level: float = 0.95) -> OperatingPoint:
    """Decisions ``score >= threshold``; each rate with its Wilson interval."""
    scores, labels = _arrays(pairs)
    _require_both_classes(labels)
    pred = scores >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    fn = int(np.sum(~pred & (labels == 1)))
    tn = int(np.sum(~pred & (labels == 0)))
    fp = int(np.sum(pred & (labels == 0)))
    return OperatingPoint(
        threshold,
        wilson_interval(tp + tn, labels.size, level),
        wilson_interval(tp, tp + fn, level),
        wilson_interval(tn, tn + fp, level),
        tp, fp, tn, fn,
    )
