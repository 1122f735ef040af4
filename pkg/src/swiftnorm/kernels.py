"""Backend selection for the hot loops.

The compiled extension (``_ckernels``) is used when it imports; otherwise
the pure-Python module is used. Set ``SWIFTNORM_PURE=1`` to force the
fallback. Both expose the same functions through :class:`Backend`.
"""
from __future__ import annotations

import logging
import os

import numpy as np

from . import _pykernels

log = logging.getLogger(__name__)

LINKAGES = {"single": 0, "complete": 1, "average": 2, "centroid": 3}

try:
    from . import _ckernels
except ImportError:  # pragma: no cover - depends on the build
    _ckernels = None


def default_threads() -> int:
    return os.cpu_count() or 1


def encode(strings):
    """Flatten strings to dense int32 symbol ids plus int64 offsets."""
    lengths = np.fromiter((len(s) for s in strings), dtype=np.int64, count=len(strings))
    offs = np.zeros(len(strings) + 1, dtype=np.int64)
    np.cumsum(lengths, out=offs[1:])
    joined = "".join(strings)
    if not joined:
        return np.zeros(1, dtype=np.int32), offs, 1
    raw = np.frombuffer(joined.encode("utf-32-le"), dtype=np.uint32)
    symbols, codes = np.unique(raw, return_inverse=True)
    return np.ascontiguousarray(codes, dtype=np.int32), offs, len(symbols)


class Backend:
    name = "abstract"

    def ratio(self, a: str, b: str) -> float:
        raise NotImplementedError

    def pair_ratios(self, xs, ys) -> np.ndarray:
        raise NotImplementedError

    def similarity_matrix(self, strings, threads=None) -> np.ndarray:
        raise NotImplementedError

    def threshold_table(self, strings, threshold, threads=None) -> np.ndarray:
        raise NotImplementedError

    def euclidean_distances(self, X, threads=None) -> np.ndarray:
        raise NotImplementedError

    def agglomerate(self, D, gate, linkage="average", strict=False,
                    stop_on_block=False, max_distance=np.inf):
        raise NotImplementedError


class PythonBackend(Backend):
    name = "python"

    def ratio(self, a, b):
        return _pykernels.ratio(a, b)

    def pair_ratios(self, xs, ys):
        return _pykernels.pair_ratios(xs, ys)

    def similarity_matrix(self, strings, threads=None):
        return _pykernels.similarity_matrix(list(strings))

    def threshold_table(self, strings, threshold, threads=None):
        return _pykernels.threshold_table(list(strings), float(threshold))

    def euclidean_distances(self, X, threads=None):
        return _pykernels.euclidean_distances(X)

    def agglomerate(self, D, gate, linkage="average", strict=False,
                    stop_on_block=False, max_distance=np.inf):
        return _pykernels.agglomerate(
            np.ascontiguousarray(D, dtype=np.float64),
            np.ascontiguousarray(gate, dtype=np.uint8),
            LINKAGES[linkage], bool(strict), bool(stop_on_block), float(max_distance),
        )


class CompiledBackend(Backend):
    name = "compiled"

    def ratio(self, a, b):
        return _ckernels.ratio_str(a, b)

    def pair_ratios(self, xs, ys):
        xs, ys = list(xs), list(ys)
        if len(xs) != len(ys):
            raise ValueError("pair_ratios needs equally long sequences")
        # dedupe so large batches over few distinct strings stay cheap
        table: dict[str, int] = {}
        for s in xs + ys:
            table.setdefault(s, len(table))
        codes, offs, nsym = encode(list(table))
        left = np.fromiter((table[s] for s in xs), dtype=np.int64, count=len(xs))
        right = np.fromiter((table[s] for s in ys), dtype=np.int64, count=len(ys))
        return _ckernels.pair_ratios(codes, offs, nsym, left, right)

    def similarity_matrix(self, strings, threads=None):
        codes, offs, nsym = encode(list(strings))
        return _ckernels.similarity_matrix(codes, offs, nsym, threads or default_threads())

    def threshold_table(self, strings, threshold, threads=None):
        codes, offs, nsym = encode(list(strings))
        return _ckernels.threshold_table(codes, offs, nsym, float(threshold),
                                         threads or default_threads())

    def euclidean_distances(self, X, threads=None):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _ckernels.euclidean_distances(X, threads or default_threads())

    def agglomerate(self, D, gate, linkage="average", strict=False,
                    stop_on_block=False, max_distance=np.inf):
        return _ckernels.agglomerate(
            np.ascontiguousarray(D, dtype=np.float64),
            np.ascontiguousarray(gate, dtype=np.uint8),
            LINKAGES[linkage], bool(strict), bool(stop_on_block), float(max_distance),
        )


_BACKENDS = {"python": PythonBackend()}
if _ckernels is not None:
    _BACKENDS["compiled"] = CompiledBackend()


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def get_backend(name: str | None = None) -> Backend:
    if name is None:
        return backend
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}; have {available_backends()}") from None


if os.environ.get("SWIFTNORM_PURE") or _ckernels is None:
    backend: Backend = _BACKENDS["python"]
else:
    backend = _BACKENDS["compiled"]
log.debug("swiftnorm kernels backend: %s", backend.name)

BACKEND = backend.name
