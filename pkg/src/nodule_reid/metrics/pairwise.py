"""Pairwise precision / recall / F-score of per-patient clusterings."""
from __future__ import annotations

from collections import Counter
from collections.abc import Hashable, Mapping, Sequence
from dataclasses import dataclass
from typing import NamedTuple

from ..core_types import Gallery, Partition, PartitionError, validate_partition


@dataclass(frozen=True)
class PairConfusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __add__(self, other: "PairConfusion") -> "PairConfusion":
        return PairConfusion(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class ClusterScores(NamedTuple):
    precision: float
    recall: float
    f_score: float
    confusion: PairConfusion


def _pairs(n: int) -> int:
    return n * (n - 1) // 2


def pair_confusion(partition: Partition, labels: Sequence[Hashable]) -> PairConfusion:
    """Confusion counts over all unordered item pairs of one patient."""
    validate_partition(partition, len(labels))
    pred = partition.labels()
    joint = Counter(zip(pred.tolist(), labels))
    tp = sum(_pairs(c) for c in joint.values())
    same_cluster = sum(_pairs(len(c)) for c in partition.clusters)
    same_nodule = sum(_pairs(c) for c in Counter(labels).values())
    fp = same_cluster - tp
    fn = same_nodule - tp
    return PairConfusion(tp, fp, _pairs(len(labels)) - tp - fp - fn, fn)


def scores_from_confusion(conf: PairConfusion) -> ClusterScores:
    precision = conf.tp / (conf.tp + conf.fp) if conf.tp + conf.fp else 1.0
    recall = conf.tp / (conf.tp + conf.fn) if conf.tp + conf.fn else 1.0
    f = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return ClusterScores(precision, recall, f, conf)


def pairwise_cluster_metrics(
    partitions: Sequence[Partition], ground_truth: Sequence[Sequence[Hashable]]
) -> ClusterScores:
    """Accumulate pair counts over patients, then compute precision, recall and F.

    ``partitions[p]`` clusters the items of patient ``p`` whose nodule labels
    are ``ground_truth[p]``. Only within-patient pairs are counted.
    """
    if len(partitions) != len(ground_truth):
        raise PartitionError(f"{len(partitions)} partitions but {len(ground_truth)} label lists")
    total = PairConfusion()
    for part, labels in zip(partitions, ground_truth):
        total = total + pair_confusion(part, list(labels))
    return scores_from_confusion(total)


def evaluate_gallery_clusters(gallery: Gallery, clusters: Mapping[str, Partition]) -> ClusterScores:
    """Score per-patient partitions (indices local to each patient) against the gallery's nodule ids."""
    groups = gallery.patients()
    if set(clusters) != set(groups):
        missing = sorted(set(groups) ^ set(clusters))
        raise PartitionError(f"clusters and gallery disagree on patients: {missing[:5]}")
    parts, truth = [], []
    for patient, idx in groups.items():
        labels = [gallery.records[i].nodule_id for i in idx]
        if any(lab is None for lab in labels):
            raise PartitionError(f"patient {patient!r} has records without nodule_id")
        parts.append(clusters[patient])
        truth.append(labels)
    return pairwise_cluster_metrics(parts, truth)


def clusters_to_ids(gallery: Gallery, clusters: Mapping[str, Partition]) -> dict[str, list[list[str]]]:
    groups = gallery.patients()
    return {
        patient: [[gallery.records[groups[patient][i]].tracklet_id for i in c] for c in part.clusters]
        for patient, part in clusters.items()
    }


def clusters_from_ids(gallery: Gallery, id_clusters: Mapping[str, Sequence[Sequence[str]]]) -> dict[str, Partition]:
    """Inverse of :func:`clusters_to_ids`; every record must appear exactly once."""
    groups = gallery.patients()
    out = {}
    for patient, clusters in id_clusters.items():
        if patient not in groups:
            raise PartitionError(f"unknown patient {patient!r}")
        local = {gallery.records[i].tracklet_id: k for k, i in enumerate(groups[patient])}
        try:
            part = Partition.from_groups([[local[t] for t in c] for c in clusters])
        except KeyError as exc:
            raise PartitionError(f"patient {patient!r}: unknown tracklet {exc.args[0]!r}") from None
        validate_partition(part, len(local))
        out[patient] = part
    return out
