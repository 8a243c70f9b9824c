"""Evaluation: pairwise clustering scores, ROC/AUC, DeLong, timing."""
from .bench import BenchRow, TUNED_PARAMETER, TuneResult, machine_info, timing_benchmark, tune_parameter
from .pairwise import (
    ClusterScores,
    PairConfusion,
    clusters_from_ids,
    clusters_to_ids,
    evaluate_gallery_clusters,
    pair_confusion,
    pairwise_cluster_metrics,
    scores_from_confusion,
)
from .roc import (
    AucInterval,
    DeLongCovariance,
    DeLongResult,
    OperatingPoint,
    Placements,
    Proportion,
    RocCurve,
    RocError,
    ScoredPair,
    auc_confidence_interval,
    auc_mann_whitney,
    delong_covariance,
    delong_test,
    midranks,
    operating_point,
    placements,
    roc_curve,
    wilson_interval,
)

__all__ = [
    "AucInterval", "BenchRow", "ClusterScores", "DeLongCovariance", "DeLongResult", "OperatingPoint",
    "PairConfusion", "Placements", "Proportion", "RocCurve", "RocError", "ScoredPair", "TUNED_PARAMETER",
    "TuneResult", "auc_confidence_interval", "auc_mann_whitney", "clusters_from_ids", "clusters_to_ids",
    "delong_covariance", "delong_test", "evaluate_gallery_clusters", "machine_info", "midranks",
    "operating_point", "pair_confusion", "pairwise_cluster_metrics", "placements", "roc_curve",
    "scores_from_confusion", "timing_benchmark", "tune_parameter", "wilson_interval",
]
