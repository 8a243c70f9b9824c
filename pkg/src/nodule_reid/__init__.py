"""Re-identification of nodule tracklets from precomputed embeddings.

Similarity matching, threshold clustering with reference baselines, loss
evaluation for metric-learning batches, and pairwise / ROC / DeLong
evaluation, with a synthetic gallery generator for desk-scale runs.
"""
__version__ = "0.1.0"

from .core_types import (
    FeatureVector,
    Gallery,
    GalleryError,
    Partition,
    PartitionError,
    TrackletRecord,
    build_gallery,
    patient_pairs,
    validate_partition,
)
from .similarity import Metric, cosine_similarity, distance, pairwise_distance_matrix, verify_pair

__all__ = [
    "FeatureVector",
    "Gallery",
    "GalleryError",
    "Metric",
    "Partition",
    "PartitionError",
    "TrackletRecord",
    "__version__",
    "build_gallery",
    "cosine_similarity",
    "distance",
    "pairwise_distance_matrix",
    "patient_pairs",
    "validate_partition",
    "verify_pair",
]
