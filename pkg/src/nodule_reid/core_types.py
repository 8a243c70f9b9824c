"""Domain types shared across the package.

A feature vector is a plain 1-D float64 ``numpy`` array. Records, galleries
and partitions are immutable once built.
"""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

FeatureVector = np.ndarray


class GalleryError(ValueError):
    """Raised when records cannot form a valid gallery."""


class PartitionError(ValueError):
    """Raised when a clustering result is not a disjoint cover."""


def as_feature_vector(values, *, name: str = "embedding") -> FeatureVector:
    vec = np.array(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise GalleryError(f"{name}: expected a non-empty 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise GalleryError(f"{name}: contains non-finite entries")
    vec.setflags(write=False)
    return vec


@dataclass(frozen=True, eq=False)
class TrackletRecord:
    tracklet_id: str
    patient_id: str
    nodule_id: Optional[str]
    length_frames: int
    embedding: FeatureVector

    def __post_init__(self):
        if not isinstance(self.length_frames, (int, np.integer)) or self.length_frames < 1:
            raise GalleryError(
                f"record {self.tracklet_id!r}: length_frames must be a positive integer, "
                f"got {self.length_frames!r}"
            )
        object.__setattr__(
            self, "embedding", as_feature_vector(self.embedding, name=f"record {self.tracklet_id!r}")
        )


@dataclass(frozen=True, eq=False)
class Gallery:
    """Ordered, validated collection of tracklet records of one embedding width."""

    records: tuple[TrackletRecord, ...]
    dim: int
    embeddings: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i: int) -> TrackletRecord:
        return self.records[i]

    @property
    def has_ground_truth(self) -> bool:
        return all(r.nodule_id is not None for r in self.records)

    def patients(self) -> dict[str, list[int]]:
        """Record indices grouped by patient, in order of first appearance."""
        groups: dict[str, list[int]] = {}
        for i, rec in enumerate(self.records):
            groups.setdefault(rec.patient_id, []).append(i)
        return groups

    def subset(self, indices: Iterable[int]) -> "Gallery":
        return build_gallery([self.records[i] for i in indices])

    def index_of(self) -> dict[str, int]:
        return {r.tracklet_id: i for i, r in enumerate(self.records)}


def build_gallery(records: Sequence[TrackletRecord]) -> Gallery:
    records = tuple(records)
    if not records:
        raise GalleryError("a gallery needs at least one record")
    dim = records[0].embedding.shape[0]
    seen: set[str] = set()
    for rec in records:
        if rec.embedding.shape[0] != dim:
            raise GalleryError(
                f"record {rec.tracklet_id!r}: embedding dimension {rec.embedding.shape[0]} "
                f"does not match gallery dimension {dim}"
            )
        if rec.tracklet_id in seen:
            raise GalleryError(f"duplicate tracklet_id {rec.tracklet_id!r}")
        seen.add(rec.tracklet_id)
    emb = np.ascontiguousarray(np.stack([r.embedding for r in records]))
    emb.setflags(write=False)
    return Gallery(records=records, dim=dim, embeddings=emb)


def patient_pairs(gallery: Gallery) -> list[tuple[int, int, int]]:
    """All unordered within-patient index pairs with their same-nodule bit.

    Pairs are emitted patient by patient, each as ``(i, j, same)`` with ``i < j``.
    """
    missing = [r.tracklet_id for r in gallery.records if r.nodule_id is None]
    if missing:
        raise GalleryError(f"record {missing[0]!r} has no nodule_id; pairs need ground truth")
    out = []
    for idx in gallery.patients().values():
        for i, j in combinations(idx, 2):
            same = int(gallery.records[i].nodule_id == gallery.records[j].nodule_id)
            out.append((i, j, same))
    return out


@dataclass(frozen=True)
class Partition:
    """Disjoint groups of indices covering ``range(n)``.

    Stored canonically: members sorted ascending, clusters ordered by their
    smallest member. Two partitions of the same items compare equal iff they
    group the items identically.
    """

    clusters: tuple[tuple[int, ...], ...]

    @classmethod
    def from_groups(cls, groups: Iterable[Iterable[int]]) -> "Partition":
        canon = [tuple(sorted(int(i) for i in g)) for g in groups]
        canon.sort(key=lambda c: c[0] if c else -1)
        return cls(tuple(canon))

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        groups: dict[int, list[int]] = {}
        for i, lab in enumerate(labels):
            groups.setdefault(lab, []).append(i)
        return cls.from_groups(groups.values())

    @classmethod
    def singletons(cls, n: int) -> "Partition":
        return cls(tuple((i,) for i in range(n)))

    @classmethod
    def whole(cls, n: int) -> "Partition":
        return cls((tuple(range(n)),) if n else ())

    def __len__(self) -> int:
        return len(self.clusters)

    def __iter__(self):
        return iter(self.clusters)

    @property
    def n_items(self) -> int:
        return sum(len(c) for c in self.clusters)

    def labels(self) -> np.ndarray:
        lab = np.full(self.n_items, -1, dtype=np.int64)
        for k, c in enumerate(self.clusters):
            lab[list(c)] = k
        return lab

    def as_sets(self) -> set[frozenset[int]]:
        return {frozenset(c) for c in self.clusters}

    def refines(self, coarser: "Partition") -> bool:
        """True if every cluster of ``self`` lies inside one cluster of ``coarser``."""
        lab = coarser.labels()
        return all(len({lab[i] for i in c}) == 1 for c in self.clusters)


def validate_partition(partition: Partition, n: int) -> None:
    """Raise PartitionError unless ``partition`` is a disjoint cover of ``range(n)``."""
    seen = set()
    for c in partition.clusters:
        if not c:
            raise PartitionError("empty cluster")
        for i in c:
            if not 0 <= i < n:
                raise PartitionError(f"index {i} outside 0..{n - 1}")
            if i in seen:
                raise PartitionError(f"index {i} appears in more than one cluster")
            seen.add(i)
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        raise PartitionError(f"indices not covered: {missing[:10]}")
