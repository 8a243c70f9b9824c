"""Command-line entry point.

Every command that writes a file also writes ``<file>.manifest.json`` with
the exact arguments (seed included), so ``nodule-reid replay`` can rebuild
the output byte for byte.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
import warnings
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import __version__, kernels
from .clustering import ALGORITHMS, ConvergenceWarning, cluster_gallery_with
from .io import (
    FormatError,
    atomic_write_text,
    dumps,
    read_clusters,
    read_gallery,
    read_pair_batch,
    read_pk_batch,
    read_scores,
    write_clusters,
    write_gallery,
    write_scores,
)
from .losses import (
    classification_loss,
    contrastive_loss,
    trihard_loss,
    verification_cross_entropy,
)
from .metrics import (
    auc_confidence_interval,
    clusters_from_ids,
    clusters_to_ids,
    delong_test,
    evaluate_gallery_clusters,
    machine_info,
    operating_point,
    roc_curve,
    timing_benchmark,
)
from .synthgen import CountDist, SynthConfig, generate_gallery, perturb_scores, score_pairs, separability_report

SEED_ENV = "NODULE_REID_SEED"

OBJECTIVES = ("trihard", "classification", "combined-class", "contrastive", "verification-ce", "combined-verif")


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be a finite positive number, got {text!r}")
    return value


def weights(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v < 0 for v in vals) or sum(vals) <= 0:
        raise argparse.ArgumentTypeError("weights must be non-negative with a positive sum")
    return vals


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get(SEED_ENV, "0"))


def _with_seed(argv: list[str], seed: int) -> list[str]:
    if "--seed" in argv or any(a.startswith("--seed=") for a in argv):
        return list(argv)
    return [*argv, "--seed", str(seed)]


def _manifest(args, argv: list[str], started: float, out: Path, inputs: list[str], extra: dict | None = None) -> None:
    manifest = {
        "command": args.command,
        "argv": argv,
        "config": {k: v for k, v in vars(args).items() if k not in ("handler",)},
        "inputs": inputs,
        "outputs": [str(out)],
        "tool_version": __version__,
        "kernel_backend": kernels.BACKEND,
        "timing": {
            "started_at": datetime.fromtimestamp(started, timezone.utc).isoformat(),
            "elapsed_seconds": time.time() - started,
        },
    }
    if extra:
        manifest.update(extra)
    atomic_write_text(manifest_path(out), dumps(manifest))


def manifest_path(out: str | os.PathLike) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


def _emit_report(args, argv, started, report: dict, inputs: list[str], extra: dict | None = None) -> None:
    text = dumps(report)
    if args.out:
        out = atomic_write_text(args.out, text)
        _manifest(args, argv, started, out, inputs, extra)
    sys.stdout.write(text)


def cmd_synth(args, argv, started) -> int:
    seed = _seed(args)
    nod = args.nodule_weights
    trk = args.tracklet_weights
    config = SynthConfig(
        n_patients=args.patients,
        nodules_per_patient=CountDist(1, len(nod), nod),
        tracklets_per_nodule=CountDist(1, len(trk), trk),
        dim=args.dim,
        intra_noise=args.intra_noise,
        min_center_angle=args.min_center_angle,
        length_mu=args.length_mu,
        length_sigma=args.length_sigma,
        seed=seed,
        patient_offset=args.patient_offset,
    )
    gallery = generate_gallery(config)
    out = write_gallery(gallery, args.out)
    nodules = {(r.patient_id, r.nodule_id) for r in gallery.records}
    summary = {
        "records": len(gallery),
        "patients": len(gallery.patients()),
        "nodules": len(nodules),
        "separability": separability_report(gallery).as_dict(),
    }
    _manifest(args, _with_seed(argv, seed), started, out, [], {"seeds": {"synth": seed}, "summary": summary})
    sys.stdout.write(dumps(summary))
    return 0


def _cluster_params(args) -> dict[str, Any]:
    if args.algo == "threshold":
        if args.tau is None:
            raise ValueError("--tau is required for --algo threshold")
        return {"tau": args.tau, "metric": args.metric or "cosine", "mode": args.mode, "seed": _seed(args), "order": args.order}
    if args.algo == "dbscan":
        eps = args.eps if args.eps is not None else args.tau
        if eps is None:
            raise ValueError("--eps (or --tau) is required for --algo dbscan")
        return {"eps": eps, "min_pts": args.min_pts, "metric": args.metric or "euclidean"}
    if args.algo == "meanshift":
        if args.bandwidth is None:
            raise ValueError("--bandwidth is required for --algo meanshift")
        return {"bandwidth": args.bandwidth}
    return {
        "damping": args.damping,
        "max_iter": args.max_iter,
        "preference": args.preference,
        "metric": args.metric or "euclidean",
    }


def _preference(text: str):
    if text == "median":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"preference must be a number or 'median', got {text!r}") from None


def cmd_cluster(args, argv, started) -> int:
    gallery = read_gallery(args.gallery)
    params = _cluster_params(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        clusters = cluster_gallery_with(gallery, args.algo, params)
    ids = clusters_to_ids(gallery, clusters)
    out = write_clusters(ids, args.out)
    extra = {
        "seeds": {"cluster": _seed(args)},
        "params": params,
        "n_clusters": {p: len(c) for p, c in clusters.items()},
    }
    if args.algo == "dbscan":
        extra["noise_convention"] = "each noise point is emitted as a singleton cluster"
    if caught:
        extra["warnings"] = sorted({str(w.message) for w in caught})
    _manifest(args, _with_seed(argv, _seed(args)), started, out, [args.gallery], extra)
    return 0


def cmd_eval_cluster(args, argv, started) -> int:
    gallery = read_gallery(args.gallery)
    clusters = clusters_from_ids(gallery, read_clusters(args.clusters))
    scores = evaluate_gallery_clusters(gallery, clusters)
    report = {
        "precision": scores.precision,
        "recall": scores.recall,
        "f_score": scores.f_score,
        "confusion": scores.confusion.__dict__,
    }
    _emit_report(args, argv, started, report, [args.clusters, args.gallery])
    return 0


def cmd_score(args, argv, started) -> int:
    gallery = read_gallery(args.gallery)
    seed = _seed(args)
    pairs = perturb_scores(score_pairs(gallery), args.noise, seed)
    out = write_scores(pairs, args.out)
    _manifest(args, _with_seed(argv, seed), started, out, [args.gallery], {"seeds": {"noise": seed}, "pairs": len(pairs)})
    return 0


def _proportion(p) -> dict:
    return {"estimate": p.estimate, "lower": p.lower, "upper": p.upper, "successes": p.successes, "trials": p.trials}


def _pair_summary(pairs, threshold, level) -> dict:
    roc = roc_curve(pairs)
    ci = auc_confidence_interval(pairs, level)
    op = operating_point(pairs, threshold, level)
    return {
        "pairs": len(pairs),
        "positives": op.tp + op.fn,
        "negatives": op.tn + op.fp,
        "auc": {"value": ci.auc, "lower": ci.lower, "upper": ci.upper, "variance": ci.variance,
                "level": level, "method": "delong"},
        "operating_point": {
            "threshold": threshold,
            "rule": "score >= threshold",
            "accuracy": _proportion(op.accuracy),
            "sensitivity": _proportion(op.sensitivity),
            "specificity": _proportion(op.specificity),
            "confusion": {"tp": op.tp, "fp": op.fp, "tn": op.tn, "fn": op.fn},
            "ci_method": "wilson",
        },
        "roc": {"auc_trapezoid": roc.auc, "points": roc.points},
    }


def cmd_eval_pairs(args, argv, started) -> int:
    pairs = read_scores(args.scores)
    report = {"model": _pair_summary(pairs, args.threshold, args.level)}
    inputs = [args.scores]
    if args.compare:
        other = read_scores(args.compare)
        inputs.append(args.compare)
        report["compare"] = _pair_summary(other, args.threshold, args.level)
        res = delong_test(pairs, other)
        report["delong"] = {
            "auc_a": res.auc_a, "auc_b": res.auc_b, "z": res.z, "p_value": res.p_value,
            "variance": res.variance, "degenerate": res.degenerate,
        }
    _emit_report(args, argv, started, report, inputs)
    return 0


def cmd_bench(args, argv, started) -> int:
    gallery = read_gallery(args.gallery)
    algos = {}
    for name in args.algos:
        ns = argparse.Namespace(**{**vars(args), "algo": name, "metric": args.metric})
        algos[name] = _cluster_params(ns)
    rows = timing_benchmark(gallery, algos, args.reps)
    report = {
        "rows": [
            {
                "algorithm": r.algorithm, "precision": r.precision, "recall": r.recall, "f_score": r.f_score,
                "params": r.params,
                "timing": {"median_seconds": r.median_seconds, "median_patient_seconds": r.median_patient_seconds},
            }
            for r in rows
        ],
        "noise_convention": "dbscan noise points are scored as singleton clusters",
        "repetitions": args.reps,
    }
    if args.out:
        out = atomic_write_text(args.out, dumps(report))
        _manifest(args, _with_seed(argv, _seed(args)), started, out, [args.gallery], {"machine": machine_info()})
    print(f"{'Method':<12}{'Precision':>11}{'Recall':>9}{'F-score':>9}{'Time(s)':>12}")
    for r in rows:
        print(f"{r.algorithm:<12}{100 * r.precision:>11.2f}{100 * r.recall:>9.2f}"
              f"{100 * r.f_score:>9.2f}{r.median_seconds:>12.6f}")
    return 0


def cmd_loss(args, argv, started) -> int:
    obj = args.objective
    components: dict[str, float] = {}
    if obj in ("trihard", "classification", "combined-class"):
        batch, logits, targets = read_pk_batch(args.batch)
        if obj in ("trihard", "combined-class"):
            if batch is None:
                raise FormatError(f"{args.batch}: objective {obj!r} needs an embedding on every line")
            components["trihard"] = trihard_loss(batch, args.margin, args.metric, args.normalize)
        if obj in ("classification", "combined-class"):
            if logits is None:
                raise FormatError(f"{args.batch}: objective {obj!r} needs logits on every line")
            components["classification"] = classification_loss(logits, targets)
    else:
        pairs = read_pair_batch(args.batch)
        if obj in ("contrastive", "combined-verif"):
            components["contrastive"] = contrastive_loss(pairs, args.contrastive_margin)
        if obj in ("verification-ce", "combined-verif"):
            if pairs.logits is None:
                raise FormatError(f"{args.batch}: objective {obj!r} needs logits on every line")
            components["verification_ce"] = verification_cross_entropy(pairs)
    report = {"objective": obj, "value": sum(components.values()), "components": components}
    _emit_report(args, argv, started, report, [args.batch])
    return 0


def cmd_replay(args, argv, started) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    replay_argv = list(manifest["argv"])
    if args.out:
        if "--out" not in replay_argv:
            raise ValueError("manifest argv has no --out to redirect")
        replay_argv[replay_argv.index("--out") + 1] = args.out
    return main(replay_argv)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nodule-reid", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic gallery")
    p.add_argument("--patients", type=positive_int, default=100)
    p.add_argument("--dim", type=positive_int, default=512)
    p.add_argument("--intra-noise", type=float, default=0.05)
    p.add_argument("--min-center-angle", type=positive_float, default=math.pi / 4)
    p.add_argument("--nodule-weights", type=weights, default=(0.90, 0.08, 0.02),
                   help="weights for 1, 2, ... nodules per patient")
    p.add_argument("--tracklet-weights", type=weights, default=(0.13, 0.17, 0.18, 0.17, 0.13, 0.10, 0.07, 0.05),
                   help="weights for 1, 2, ... tracklets per nodule")
    p.add_argument("--length-mu", type=float, default=4.0)
    p.add_argument("--length-sigma", type=float, default=1.2)
    p.add_argument("--patient-offset", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth)

    def cluster_flags(p, algo_flag: bool):
        if algo_flag:
            p.add_argument("--algo", choices=ALGORITHMS, default="threshold")
        p.add_argument("--tau", type=positive_float)
        p.add_argument("--metric", choices=("cosine", "euclidean"))
        p.add_argument("--mode", choices=("fixpoint", "literal"), default="fixpoint")
        p.add_argument("--order", choices=("seeded_random", "input_order"), default="seeded_random")
        p.add_argument("--eps", type=positive_float)
        p.add_argument("--min-pts", type=positive_int, default=1)
        p.add_argument("--bandwidth", type=positive_float)
        p.add_argument("--damping", type=float, default=0.9)
        p.add_argument("--max-iter", type=positive_int, default=200)
        p.add_argument("--preference", type=_preference, default="median")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("cluster", help="cluster each patient's tracklets")
    p.add_argument("gallery")
    cluster_flags(p, True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("eval-cluster", help="pairwise precision / recall / F of a clusters file")
    p.add_argument("clusters")
    p.add_argument("gallery")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_eval_cluster)

    p = sub.add_parser("score", help="cosine-score every within-patient pair of a gallery")
    p.add_argument("gallery")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise added to each score")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("eval-pairs", help="ROC / AUC / operating point, optionally DeLong against a second model")
    p.add_argument("scores")
    p.add_argument("--compare")
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_eval_pairs)

    p = sub.add_parser("bench", help="accuracy and timing of the clustering algorithms")
    p.add_argument("gallery")
    p.add_argument("--algos", type=lambda s: [a for a in s.split(",") if a], default=list(ALGORITHMS))
    p.add_argument("--reps", type=int, default=5)
    cluster_flags(p, False)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("loss", help="evaluate a training objective on a batch file")
    p.add_argument("batch")
    p.add_argument("--objective", choices=OBJECTIVES, required=True)
    p.add_argument("--margin", type=float, default=0.3, help="triplet margin")
    p.add_argument("--contrastive-margin", type=positive_float, default=1.0)
    p.add_argument("--metric", choices=("euclidean", "cosine"), default="euclidean")
    p.add_argument("--normalize", action="store_true", help="average the triplet terms instead of summing")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_loss)

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="write to this path instead of the recorded one")
    p.set_defaults(handler=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    if getattr(args, "algos", None):
        bad = [a for a in args.algos if a not in ALGORITHMS]
        if bad:
            build_parser().error(f"unknown algorithm(s) {bad}; choose from {ALGORITHMS}")
    try:
        return args.handler(args, argv, time.time())
    except (FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
