"""Kernel backend selection.

The Cython extension is used when it imports; otherwise the numpy fallback.
Set ``NODULE_REID_BACKEND=python`` to force the fallback.
"""
import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

COSINE = 0
EUCLIDEAN = 1

_BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels


def available_backends() -> list[str]:
    return list(_BACKENDS)


def get_backend(name: str | None = None) -> ModuleType:
    if name is None:
        return _active
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}") from None


def _select() -> tuple[str, ModuleType]:
    wanted = os.environ.get("NODULE_REID_BACKEND", "").strip().lower()
    if wanted:
        return wanted, get_backend(wanted)
    if _ckernels is not None:
        return "compiled", _ckernels
    return "python", _pykernels


BACKEND, _active = _select()

pairwise_distances = _active.pairwise_distances
threshold_components = _active.threshold_components
threshold_literal = _active.threshold_literal
