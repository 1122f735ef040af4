"""Pure-Python kernels, used when the compiled extension is unavailable.

Same contracts as ``_ckernels`` but operating on plain ``str`` values.
Ratcliff/Obershelp matching follows the classic block-index scheme: for
each position of ``a`` only the positions of the same character in ``b``
are visited.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import pdist, squareform

SINGLE, COMPLETE, AVERAGE, CENTROID = 0, 1, 2, 3


def _index(b: str) -> dict[str, list[int]]:
    b2j: dict[str, list[int]] = {}
    for j, ch in enumerate(b):
        b2j.setdefault(ch, []).append(j)
    return b2j


def _longest(a, b2j, alo, ahi, blo, bhi):
    # earliest block in a wins ties, then earliest in b
    besti, bestj, bestk = alo, blo, 0
    j2len: dict[int, int] = {}
    for i in range(alo, ahi):
        newj2len = {}
        for j in b2j.get(a[i], ()):
            if j < blo:
                continue
            if j >= bhi:
                break
            k = newj2len[j] = j2len.get(j - 1, 0) + 1
            if k > bestk:
                besti, bestj, bestk = i - k + 1, j - k + 1, k
        j2len = newj2len
    return besti, bestj, bestk


def matched(a: str, b: str, b2j=None) -> int:
    if not a or not b:
        return 0
    if b2j is None:
        b2j = _index(b)
    total = 0
    stack = [(0, len(a), 0, len(b))]
    while stack:
        alo, ahi, blo, bhi = stack.pop()
        i, j, k = _longest(a, b2j, alo, ahi, blo, bhi)
        if k:
            total += k
            if alo < i and blo < j:
                stack.append((alo, i, blo, j))
            if i + k < ahi and j + k < bhi:
                stack.append((i + k, ahi, j + k, bhi))
    return total


def ratio(a: str, b: str) -> float:
    n = len(a) + len(b)
    if n == 0:
        return 1.0
    return 2.0 * matched(a, b) / n


def pair_ratios(xs, ys) -> np.ndarray:
    return np.array([ratio(x, y) for x, y in zip(xs, ys)], dtype=np.float64)


def similarity_matrix(strings, threads: int = 1) -> np.ndarray:
    m = len(strings)
    out = np.empty((m, m), dtype=np.float64)
    indexes = [_index(s) for s in strings]
    lengths = [len(s) for s in strings]
    for i in range(m):
        out[i, i] = 1.0
        a = strings[i]
        for j in range(i + 1, m):
            n = lengths[i] + lengths[j]
            r = 2.0 * matched(a, strings[j], indexes[j]) / n if n else 1.0
            out[i, j] = r
            out[j, i] = r
    return out


def threshold_table(strings, threshold: float, threads: int = 1) -> np.ndarray:
    m = len(strings)
    out = np.zeros((m, m), dtype=np.uint8)
    lengths = np.array([len(s) for s in strings], dtype=np.int64)
    for i in range(m):
        la = lengths[i]
        if la == 0:
            continue
        out[i, i] = 1 if threshold <= 1.0 else 0
        lb = lengths[i + 1:]
        bound = 2.0 * np.minimum(la, lb) / (la + lb)
        for off in np.flatnonzero((lb > 0) & (bound >= threshold)):
            j = i + 1 + int(off)
            ok = 1 if ratio(strings[i], strings[j]) >= threshold else 0
            out[i, j] = ok
            out[j, i] = ok
    return out


def euclidean_distances(X: np.ndarray, threads: int = 1) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        return np.zeros((X.shape[0], X.shape[0]))
    return squareform(pdist(X, "euclidean"))


def agglomerate(D, gate, linkage: int, strict: bool, stop_on_block: bool, max_distance: float):
    """Greedy gated agglomeration; see ``_ckernels.agglomerate``."""
    m = D.shape[0]
    stat = np.array(D, dtype=np.float64, copy=True)
    if linkage == CENTROID:
        stat = stat * stat
    adm = np.array(gate, dtype=bool, copy=True)
    size = np.ones(m, dtype=np.int64)
    live = np.ones(m, dtype=bool)
    nnj = np.full(m, -1, dtype=np.int64)
    nnv = np.zeros(m, dtype=np.float64)
    parent = np.arange(m, dtype=np.int64)
    merges = []

    def values(i, cols):
        st = stat[i, cols]
        if linkage == AVERAGE:
            return st / (float(size[i]) * size[cols].astype(np.float64))
        if linkage == CENTROID:
            return np.sqrt(np.maximum(st, 0.0))
        return st

    def candidates(i, cols):
        v = values(i, cols)
        ok = live[cols] & (v <= max_distance)
        if not stop_on_block:
            ok &= adm[i, cols]
        return v, ok

    def recompute(i):
        cols = np.arange(i + 1, m)
        v, ok = candidates(i, cols)
        idx = np.flatnonzero(ok)
        if idx.size == 0:
            nnj[i] = -1
            nnv[i] = 0.0
            return
        k = idx[np.argmin(v[idx])]
        nnj[i] = cols[k]
        nnv[i] = v[k]

    for i in range(m):
        recompute(i)

    while True:
        rows = np.flatnonzero(live & (nnj >= 0))
        if rows.size == 0:
            break
        a = int(rows[np.argmin(nnv[rows])])
        b = int(nnj[a])
        bestv = float(nnv[a])
        if stop_on_block and not adm[a, b]:
            live[a] = live[b] = False
            nnj[a] = nnj[b] = -1
            for i in np.flatnonzero(live & ((nnj == a) | (nnj == b))):
                recompute(int(i))
            continue

        na, nb = float(size[a]), float(size[b])
        tot = na + nb
        cols = np.flatnonzero(live)
        cols = cols[(cols != a) & (cols != b)]
        sa, sb = stat[a, cols], stat[b, cols]
        if linkage == AVERAGE:
            v = sa + sb
        elif linkage == SINGLE:
            v = np.where(sa <= sb, sa, sb)
        elif linkage == COMPLETE:
            v = np.where(sa >= sb, sa, sb)
        else:
            v = np.maximum((na * sa + nb * sb) / tot - na * nb * stat[a, b] / (tot * tot), 0.0)
        stat[a, cols] = v
        stat[cols, a] = v
        if strict:
            adm[a, cols] &= adm[b, cols]
            adm[cols, a] = adm[a, cols]
        size[a] += size[b]
        live[b] = False
        nnj[b] = -1
        parent[b] = a
        merges.append((a, b, bestv))

        recompute(a)
        lower = np.flatnonzero(live[:a])
        if lower.size:
            stale = (nnj[lower] == a) | (nnj[lower] == b)
            for i in lower[stale]:
                recompute(int(i))
            rest = lower[~stale]
            if rest.size:
                v = values_col(stat, size, rest, a, linkage)
                ok = v <= max_distance
                if not stop_on_block:
                    ok &= adm[rest, a]
                better = ok & ((nnj[rest] < 0) | (v < nnv[rest]) | ((v == nnv[rest]) & (a < nnj[rest])))
                nnj[rest[better]] = a
                nnv[rest[better]] = v[better]
        mid = np.arange(a + 1, b)
        for i in mid[live[mid] & (nnj[mid] == b)]:
            recompute(int(i))

    for i in range(m):
        parent[i] = parent[parent[i]]
    return parent, merges


def values_col(stat, size, rows, j, linkage):
    st = stat[rows, j]
    if linkage == AVERAGE:
        return st / (size[rows].astype(np.float64) * float(size[j]))
    if linkage == CENTROID:
        return np.sqrt(np.maximum(st, 0.0))
    return st
