"""Line-oriented file formats and atomic writes.

Gallery (JSONL), one record per line::

    {"tracklet_id": str, "patient_id": str, "nodule_id": str | null,
     "length_frames": int, "embedding": [number, ...]}

Scores (JSONL)::

    {"pair_id": str, "id_a": str, "id_b": str, "score": number, "label": 0 | 1}

Clusters (JSON): ``{patient_id: [[tracklet_id, ...], ...]}``.

Loss batches (JSONL), one sample per line. PK batches carry ``label``
(class within the batch) and ``embedding``, optionally ``logits`` and
``target`` (class index into the logits, defaulting to ``label``). Pair
batches carry ``embedding_1``, ``embedding_2``, ``y`` and optionally
``logits`` (two values, index 1 meaning "same nodule").

Parsing is strict: missing or unknown fields, wrong types and non-finite
numbers are rejected with the file name and line number. Floats are written
with ``repr`` so they read back bit-identically.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from collections.abc import Iterable, Iterator, Mapping
from pathlib import Path
from typing import Any

import numpy as np

from .core_types import Gallery, GalleryError, TrackletRecord, build_gallery
from .losses import LabeledPairBatch, PKBatch, one_hot
from .metrics.roc import ScoredPair


class FormatError(ValueError):
    """A file could not be parsed; the message names file and line."""


def _reject_constant(name: str):
    raise ValueError(f"non-finite number {name}")


def _loads(text: str) -> Any:
    return json.loads(text, parse_constant=_reject_constant)


def jsonable(obj: Any) -> Any:
    """Convert numpy values to plain Python and non-finite floats to ``None``."""
    if isinstance(obj, Mapping):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps(obj: Any, *, indent: int | None = 2) -> str:
    return json.dumps(jsonable(obj), indent=indent, allow_nan=False) + "\n"


def atomic_write_text(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonl(path: str | os.PathLike) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = _loads(line)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            if not isinstance(obj, dict):
                raise FormatError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _check_fields(obj: dict, required: set[str], optional: set[str], where: str) -> None:
    missing = required - obj.keys()
    if missing:
        raise FormatError(f"{where}: missing field(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        raise FormatError(f"{where}: unknown field(s) {sorted(unknown)}")


def _string(obj, key, where, nullable=False):
    v = obj[key]
    if v is None and nullable:
        return None
    if not isinstance(v, str) or not v:
        raise FormatError(f"{where}: {key} must be a non-empty string")
    return v


def _int(obj, key, where):
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise FormatError(f"{where}: {key} must be an integer")
    return v


def _vector(obj, key, where, length: int | None = None) -> np.ndarray:
    v = obj[key]
    if not isinstance(v, list) or not v or not all(
        isinstance(x, (int, float)) and not isinstance(x, bool) for x in v
    ):
        raise FormatError(f"{where}: {key} must be a non-empty array of numbers")
    arr = np.array(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise FormatError(f"{where}: {key} contains non-finite numbers")
    if length is not None and arr.size != length:
        raise FormatError(f"{where}: {key} must have {length} entries, got {arr.size}")
    return arr


GALLERY_FIELDS = {"tracklet_id", "patient_id", "nodule_id", "length_frames", "embedding"}


def read_gallery(path: str | os.PathLike) -> Gallery:
    records = []
    for lineno, obj in _jsonl(path):
        where = f"{path}:{lineno}"
        _check_fields(obj, GALLERY_FIELDS, set(), where)
        try:
            records.append(
                TrackletRecord(
                    _string(obj, "tracklet_id", where),
                    _string(obj, "patient_id", where),
                    _string(obj, "nodule_id", where, nullable=True),
                    _int(obj, "length_frames", where),
                    _vector(obj, "embedding", where),
                )
            )
        except GalleryError as exc:
            raise FormatError(f"{where}: {exc}") from None
    if not records:
        raise FormatError(f"{path}: no records")
    try:
        return build_gallery(records)
    except GalleryError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _lines(objs: Iterable[dict]) -> str:
    return "".join(json.dumps(o, separators=(",", ":"), allow_nan=False) + "\n" for o in objs)


def gallery_text(gallery: Gallery) -> str:
    return _lines(
        {
            "tracklet_id": r.tracklet_id,
            "patient_id": r.patient_id,
            "nodule_id": r.nodule_id,
            "length_frames": int(r.length_frames),
            "embedding": r.embedding.tolist(),
        }
        for r in gallery.records
    )


def write_gallery(gallery: Gallery, path: str | os.PathLike) -> Path:
    return atomic_write_text(path, gallery_text(gallery))


SCORE_FIELDS = {"pair_id", "id_a", "id_b", "score", "label"}


def read_scores(path: str | os.PathLike) -> list[ScoredPair]:
    pairs = []
    seen = set()
    for lineno, obj in _jsonl(path):
        where = f"{path}:{lineno}"
        _check_fields(obj, SCORE_FIELDS, set(), where)
        score = obj["score"]
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not math.isfinite(score):
            raise FormatError(f"{where}: score must be a finite number")
        label = _int(obj, "label", where)
        if label not in (0, 1):
            raise FormatError(f"{where}: label must be 0 or 1")
        pair_id = _string(obj, "pair_id", where)
        if pair_id in seen:
            raise FormatError(f"{where}: duplicate pair_id {pair_id!r}")
        seen.add(pair_id)
        pairs.append(ScoredPair(pair_id, _string(obj, "id_a", where), _string(obj, "id_b", where), float(score), label))
    if not pairs:
        raise FormatError(f"{path}: no scored pairs")
    return pairs


def write_scores(pairs: Iterable[ScoredPair], path: str | os.PathLike) -> Path:
    return atomic_write_text(
        path,
        _lines(
            {"pair_id": p.pair_id, "id_a": p.id_a, "id_b": p.id_b, "score": float(p.score), "label": int(p.label)}
            for p in pairs
        ),
    )


def read_clusters(path: str | os.PathLike) -> dict[str, list[list[str]]]:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = _loads(fh.read())
    except ValueError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: expected an object mapping patient_id to clusters")
    for patient, clusters in obj.items():
        if not isinstance(clusters, list) or not all(
            isinstance(c, list) and c and all(isinstance(t, str) for t in c) for c in clusters
        ):
            raise FormatError(f"{path}: patient {patient!r} must map to non-empty lists of tracklet ids")
    return obj


def write_clusters(clusters: Mapping[str, list[list[str]]], path: str | os.PathLike) -> Path:
    return atomic_write_text(path, dumps(dict(clusters)))


def read_pk_batch(path: str | os.PathLike) -> tuple[PKBatch | None, np.ndarray | None, np.ndarray | None]:
    """Return ``(batch, logits, one_hot_targets)``; parts absent from the file are ``None``."""
    rows = list(_jsonl(path))
    if not rows:
        raise FormatError(f"{path}: empty batch")
    embeddings, labels, logits, targets = [], [], [], []
    for lineno, obj in rows:
        where = f"{path}:{lineno}"
        _check_fields(obj, {"label"}, {"embedding", "logits", "target"}, where)
        labels.append(_int(obj, "label", where))
        if "embedding" in obj:
            embeddings.append(_vector(obj, "embedding", where, len(embeddings[0]) if embeddings else None))
        if "logits" in obj:
            logits.append(_vector(obj, "logits", where, len(logits[0]) if logits else None))
            targets.append(_int(obj, "target", where) if "target" in obj else labels[-1])
    for name, got in (("embedding", embeddings), ("logits", logits)):
        if got and len(got) != len(rows):
            raise FormatError(f"{path}: {name} present on some lines but not all")
    batch = None
    if embeddings:
        try:
            batch = PKBatch.from_arrays(np.stack(embeddings), np.array(labels))
        except ValueError as exc:
            raise FormatError(f"{path}: {exc}") from None
    if not logits:
        return batch, None, None
    z = np.stack(logits)
    try:
        return batch, z, one_hot(targets, z.shape[1])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def read_pair_batch(path: str | os.PathLike) -> LabeledPairBatch:
    rows = list(_jsonl(path))
    if not rows:
        raise FormatError(f"{path}: empty batch")
    first, second, ys, logits = [], [], [], []
    for lineno, obj in rows:
        where = f"{path}:{lineno}"
        _check_fields(obj, {"embedding_1", "embedding_2", "y"}, {"logits"}, where)
        a = _vector(obj, "embedding_1", where, len(first[0]) if first else None)
        first.append(a)
        second.append(_vector(obj, "embedding_2", where, a.size))
        y = _int(obj, "y", where)
        if y not in (0, 1):
            raise FormatError(f"{where}: y must be 0 or 1")
        ys.append(y)
        if "logits" in obj:
            logits.append(_vector(obj, "logits", where, 2))
    if logits and len(logits) != len(rows):
        raise FormatError(f"{path}: logits present on some lines but not all")
    return LabeledPairBatch(np.stack(first), np.stack(second), np.array(ys), np.stack(logits) if logits else None)
