"""Synthetic galleries: patients with nodules, nodules with tracklets.

Nodule centres are unit vectors kept at least ``min_center_angle`` apart
within a patient. A tracklet embedding is its centre plus isotropic
Gaussian noise, renormalised onto the unit sphere. Default proportions
follow a clinical breast-ultrasound cohort: about 1.1 nodules per patient
and 3.9 tracklets per nodule, with tracklet lengths between 1 and 2122
frames.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .core_types import Gallery, TrackletRecord, build_gallery, patient_pairs
from .metrics.roc import ScoredPair
from .similarity import cosine_similarity, distance_matrix

MAX_TRACKLET_FRAMES = 2122


@dataclass(frozen=True)
class CountDist:
    """Discrete distribution over ``low..high`` with the given weights."""

    low: int
    high: int
    weights: tuple[float, ...]

    def __post_init__(self):
        if self.low < 1 or self.high < self.low:
            raise ValueError(f"need 1 <= low <= high, got {self.low}..{self.high}")
        if len(self.weights) != self.high - self.low + 1:
            raise ValueError("one weight per value in low..high is required")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise ValueError("weights must be non-negative with a positive sum")

    @property
    def probabilities(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=np.float64)
        return w / w.sum()

    @property
    def mean(self) -> float:
        return float(np.arange(self.low, self.high + 1) @ self.probabilities)

    def sample(self, rng: np.random.Generator) -> int:
        return int(self.low + rng.choice(self.high - self.low + 1, p=self.probabilities))

    @classmethod
    def fixed(cls, value: int) -> "CountDist":
        return cls(value, value, (1.0,))


# 90% single-nodule patients; mean about 1.12
DEFAULT_NODULES = CountDist(1, 3, (0.90, 0.08, 0.02))
# mean about 3.83
DEFAULT_TRACKLETS = CountDist(1, 8, (0.13, 0.17, 0.18, 0.17, 0.13, 0.10, 0.07, 0.05))


@dataclass(frozen=True)
class SynthConfig:
    n_patients: int = 100
    nodules_per_patient: CountDist = DEFAULT_NODULES
    tracklets_per_nodule: CountDist = DEFAULT_TRACKLETS
    dim: int = 512
    intra_noise: float = 0.05
    min_center_angle: float = math.pi / 4
    length_mu: float = 4.0
    length_sigma: float = 1.2
    seed: int = 0
    max_attempts: int = 1000
    patient_offset: int = field(default=0)
    """Added to patient numbers, so galleries drawn for different splits get distinct ids."""

    def __post_init__(self):
        if self.n_patients < 1:
            raise ValueError(f"n_patients must be >= 1, got {self.n_patients}")
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if not self.intra_noise >= 0:
            raise ValueError(f"intra_noise must be >= 0, got {self.intra_noise}")
        if not 0 < self.min_center_angle <= math.pi:
            raise ValueError(f"min_center_angle must lie in (0, pi], got {self.min_center_angle}")
        if self.length_sigma < 0:
            raise ValueError("length_sigma must be >= 0")


class SynthesisError(RuntimeError):
    pass


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.sqrt(v @ v)


def _centres(k: int, cfg: SynthConfig, rng: np.random.Generator) -> list[np.ndarray]:
    cos_limit = math.cos(cfg.min_center_angle)
    out: list[np.ndarray] = []
    while len(out) < k:
        for _ in range(cfg.max_attempts):
            c = _unit(rng.standard_normal(cfg.dim))
            if all(c @ o <= cos_limit for o in out):
                out.append(c)
                break
        else:
            raise SynthesisError(
                f"could not place {k} nodule centres {cfg.min_center_angle:.4f} rad apart in "
                f"{cfg.dim} dimensions after {cfg.max_attempts} attempts"
            )
    return out


def _length(cfg: SynthConfig, rng: np.random.Generator) -> int:
    while True:
        frames = int(round(rng.lognormal(cfg.length_mu, cfg.length_sigma)))
        if 1 <= frames <= MAX_TRACKLET_FRAMES:
            return frames


def generate_gallery(config: SynthConfig) -> Gallery:
    rng = np.random.default_rng(config.seed)
    records = []
    for p in range(config.n_patients):
        patient = f"p{p + config.patient_offset:05d}"
        k = config.nodules_per_patient.sample(rng)
        for n, centre in enumerate(_centres(k, config, rng)):
            nodule = f"{patient}-n{n}"
            for t in range(config.tracklets_per_nodule.sample(rng)):
                emb = _unit(centre + config.intra_noise * rng.standard_normal(config.dim))
                records.append(TrackletRecord(f"{nodule}-t{t}", patient, nodule, _length(config, rng), emb))
    return build_gallery(records)


def split_patients(gallery: Gallery, fraction: float, seed: int = 0) -> tuple[Gallery, Gallery]:
    """Split by patient into ``(first, rest)`` with about ``fraction`` of patients first."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    groups = list(gallery.patients().values())
    if len(groups) < 2:
        raise ValueError("need at least two patients to split")
    perm = np.random.default_rng(seed).permutation(len(groups))
    cut = min(len(groups) - 1, max(1, round(fraction * len(groups))))
    first = sorted(i for g in perm[:cut] for i in groups[g])
    rest = sorted(i for g in perm[cut:] for i in groups[g])
    return gallery.subset(first), gallery.subset(rest)


@dataclass(frozen=True)
class SeparabilityReport:
    intra_pairs: int
    inter_pairs: int
    intra_max: float
    inter_min: float
    intra_mean: float
    inter_mean: float
    overlap_fraction: float
    """Share of within-patient different-nodule pairs closer than the largest same-nodule distance."""

    @property
    def separable(self) -> bool:
        return self.inter_pairs == 0 or self.intra_pairs == 0 or self.intra_max < self.inter_min

    def as_dict(self) -> dict:
        return {**self.__dict__, "separable": self.separable}


def separability_report(gallery: Gallery) -> SeparabilityReport:
    """Cosine distances of same-nodule vs different-nodule pairs within patients."""
    intra, inter = [], []
    for idx in gallery.patients().values():
        D = distance_matrix(gallery.embeddings[idx], "cosine")
        for a in range(len(idx)):
            for b in range(a + 1, len(idx)):
                same = gallery.records[idx[a]].nodule_id == gallery.records[idx[b]].nodule_id
                (intra if same else inter).append(D[a, b])
    intra_a = np.array(intra)
    inter_a = np.array(inter)
    intra_max = float(intra_a.max()) if intra else 0.0
    return SeparabilityReport(
        len(intra), len(inter),
        intra_max,
        float(inter_a.min()) if inter else math.inf,
        float(intra_a.mean()) if intra else 0.0,
        float(inter_a.mean()) if inter else math.inf,
        float((inter_a < intra_max).mean()) if inter else 0.0,
    )


def score_pairs(gallery: Gallery) -> list[ScoredPair]:
    """Cosine-similarity score of every within-patient pair, with its same-nodule label."""
    out = []
    for i, j, same in patient_pairs(gallery):
        a, b = gallery.records[i], gallery.records[j]
        out.append(
            ScoredPair(f"{a.tracklet_id}|{b.tracklet_id}", a.tracklet_id, b.tracklet_id,
                       cosine_similarity(a.embedding, b.embedding), same)
        )
    return out


def perturb_scores(pairs: Sequence[ScoredPair], noise_sigma: float, seed: int = 0) -> list[ScoredPair]:
    """Add seeded Gaussian noise to every score; labels and ids are kept."""
    if not noise_sigma >= 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if noise_sigma == 0:
        return list(pairs)
    noise = np.random.default_rng(seed).normal(0.0, noise_sigma, size=len(pairs))
    return [p._replace(score=float(p.score + e)) for p, e in zip(pairs, noise)]
