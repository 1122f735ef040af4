# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: Ratcliff/Obershelp matching, pairwise Euclidean
distances and gated agglomeration.

Strings arrive pre-encoded as int32 symbol ids (see ``kernels.encode``) in
one flat buffer with int64 offsets. All parallel loops write disjoint cells,
so results do not depend on the thread count.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange
from libc.stdlib cimport malloc, free
from libc.math cimport sqrt

cnp.import_array()

ctypedef long long i64


cdef struct Scratch:
    int* lens
    i64* stamps
    i64 counter
    int* stack


cdef int _scratch_init(Scratch* s, Py_ssize_t maxlen) noexcept nogil:
    cdef Py_ssize_t n = maxlen + 2
    cdef Py_ssize_t k
    s.lens = <int*> malloc(n * sizeof(int))
    s.stamps = <i64*> malloc(n * sizeof(i64))
    s.stack = <int*> malloc(4 * n * sizeof(int))
    s.counter = 0
    if s.lens == NULL or s.stamps == NULL or s.stack == NULL:
        return -1
    for k in range(n):
        s.stamps[k] = -1
    return 0


cdef void _scratch_free(Scratch* s) noexcept nogil:
    free(s.lens)
    free(s.stamps)
    free(s.stack)


cdef Scratch* _scratch_new(Py_ssize_t maxlen) noexcept nogil:
    cdef Scratch* s = <Scratch*> malloc(sizeof(Scratch))
    if s == NULL:
        return NULL
    if _scratch_init(s, maxlen) != 0:
        _scratch_free(s)
        free(s)
        return NULL
    return s


cdef void _scratch_del(Scratch* s) noexcept nogil:
    _scratch_free(s)
    free(s)


cdef Py_ssize_t _matched(const int* a, Py_ssize_t la,
                         const int* b, Py_ssize_t lb,
                         const i64* boff, const int* bpos,
                         Scratch* s) noexcept nogil:
    """Characters covered by the recursive longest-block matching of a vs b.

    ``boff[c]..boff[c+1]`` indexes the ascending positions of symbol c in b.
    """
    cdef Py_ssize_t total = 0
    cdef Py_ssize_t top = 0
    cdef Py_ssize_t alo, ahi, blo, bhi, i, j, k, p, besti, bestj, bestk, bestrow
    cdef i64 row
    cdef int c
    if la == 0 or lb == 0:
        return 0
    s.stack[0] = 0
    s.stack[1] = <int> la
    s.stack[2] = 0
    s.stack[3] = <int> lb
    top = 1
    while top > 0:
        top -= 1
        alo = s.stack[4 * top]
        ahi = s.stack[4 * top + 1]
        blo = s.stack[4 * top + 2]
        bhi = s.stack[4 * top + 3]
        besti = alo
        bestj = blo
        bestk = 0
        bestrow = -1
        for i in range(alo, ahi):
            c = a[i]
            row = s.counter + (i - alo) + 1
            # descending j: lens[j-1] still holds the previous row's value
            p = boff[c + 1] - 1
            while p >= boff[c]:
                j = bpos[p]
                p -= 1
                if j >= bhi:
                    continue
                if j < blo:
                    break
                if j > blo and s.stamps[j - 1] == row - 1:
                    k = s.lens[j - 1] + 1
                else:
                    k = 1
                s.lens[j] = <int> k
                s.stamps[j] = row
                if k > bestk or (k == bestk and bestrow == i):
                    besti = i - k + 1
                    bestj = j - k + 1
                    bestk = k
                    bestrow = i
        s.counter += (ahi - alo) + 2
        if bestk > 0:
            total += bestk
            if alo < besti and blo < bestj:
                s.stack[4 * top] = <int> alo
                s.stack[4 * top + 1] = <int> besti
                s.stack[4 * top + 2] = <int> blo
                s.stack[4 * top + 3] = <int> bestj
                top += 1
            if besti + bestk < ahi and bestj + bestk < bhi:
                s.stack[4 * top] = <int> (besti + bestk)
                s.stack[4 * top + 1] = <int> ahi
                s.stack[4 * top + 2] = <int> (bestj + bestk)
                s.stack[4 * top + 3] = <int> bhi
                top += 1
    return total


cdef inline double _ratio(Py_ssize_t matched, Py_ssize_t la, Py_ssize_t lb) noexcept nogil:
    if la + lb == 0:
        return 1.0
    return (2.0 * matched) / <double> (la + lb)


def ratio_str(str a, str b):
    """Ratio of one string pair without the batch encoding step.

    Symbols are numbered by first appearance in ``b``; characters of ``a``
    absent from ``b`` share one extra symbol with no positions.
    """
    cdef Py_ssize_t la = len(a), lb = len(b), n = max(la, lb), i, j, c, nsym = 0, mt
    cdef Py_UCS4 ch
    cdef Scratch scr
    if la == 0 or lb == 0:
        return _ratio(0, la, lb)
    cdef int* buf = <int*> malloc((la + 2 * lb + 2 * (lb + 2)) * sizeof(int))
    cdef i64* boff = <i64*> malloc((lb + 2) * sizeof(i64))
    cdef Py_UCS4* syms = <Py_UCS4*> malloc(lb * sizeof(Py_UCS4))
    if buf == NULL or boff == NULL or syms == NULL or _scratch_init(&scr, n) != 0:
        free(buf); free(boff); free(syms)
        _scratch_free(&scr)
        raise MemoryError()
    cdef int* ia = buf
    cdef int* ib = buf + la
    cdef int* bpos = buf + la + lb
    for j in range(lb):
        ch = b[j]
        for c in range(nsym):
            if syms[c] == ch:
                break
        else:
            c = nsym
            syms[nsym] = ch
            nsym += 1
        ib[j] = <int> c
    for i in range(la):
        ch = a[i]
        ia[i] = <int> nsym
        for c in range(nsym):
            if syms[c] == ch:
                ia[i] = <int> c
                break
    # CSR positions per symbol, ascending; symbol nsym is empty
    for c in range(nsym + 2):
        boff[c] = 0
    for j in range(lb):
        boff[ib[j] + 1] += 1
    for c in range(nsym + 1):
        boff[c + 1] += boff[c]
    for j in range(lb):
        c = ib[j]
        bpos[boff[c]] = <int> j
        boff[c] += 1
    for c in range(nsym, 0, -1):
        boff[c] = boff[c - 1]
    boff[0] = 0
    mt = _matched(ia, la, ib, lb, boff, bpos, &scr)
    _scratch_free(&scr)
    free(buf); free(boff); free(syms)
    return _ratio(mt, la, lb)


def _position_index(const int[::1] codes, const i64[::1] offs, int nsym):
    """Per-string, per-symbol ascending positions (CSR layout)."""
    cdef Py_ssize_t m = offs.shape[0] - 1
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t s, q, c, base
    sidx_arr = np.zeros(m * (nsym + 1), dtype=np.int64)
    pos_arr = np.empty(max(n, 1), dtype=np.int32)
    cdef i64[::1] sidx = sidx_arr
    cdef int[::1] pos = pos_arr
    cdef i64[::1] fill = np.zeros(nsym + 1, dtype=np.int64)
    for s in range(m):
        base = s * (nsym + 1)
        for c in range(nsym + 1):
            fill[c] = 0
        for q in range(offs[s], offs[s + 1]):
            fill[codes[q] + 1] += 1
        sidx[base] = offs[s]
        for c in range(nsym):
            sidx[base + c + 1] = sidx[base + c] + fill[c + 1]
        for c in range(nsym):
            fill[c] = sidx[base + c]
        for q in range(offs[s], offs[s + 1]):
            c = codes[q]
            pos[fill[c]] = <int> (q - offs[s])
            fill[c] += 1
    return sidx_arr, pos_arr


def pair_ratios(const int[::1] codes, const i64[::1] offs, int nsym,
                const i64[::1] left, const i64[::1] right):
    """Ratios ratio(s[left[t]], s[right[t]]) for every t."""
    cdef Py_ssize_t npairs = left.shape[0]
    cdef Py_ssize_t m = offs.shape[0] - 1
    cdef Py_ssize_t t, x, y, maxlen = 0, la, lb, mt
    cdef Scratch scr
    out_arr = np.empty(npairs, dtype=np.float64)
    cdef double[::1] out = out_arr
    sidx_arr, pos_arr = _position_index(codes, offs, nsym)
    cdef i64[::1] sidx = sidx_arr
    cdef int[::1] pos = pos_arr
    for t in range(m):
        if offs[t + 1] - offs[t] > maxlen:
            maxlen = offs[t + 1] - offs[t]
    if _scratch_init(&scr, maxlen) != 0:
        _scratch_free(&scr)
        raise MemoryError()
    with nogil:
        for t in range(npairs):
            x = left[t]
            y = right[t]
            la = offs[x + 1] - offs[x]
            lb = offs[y + 1] - offs[y]
            mt = _matched(&codes[0] + offs[x], la, &codes[0] + offs[y], lb,
                          &sidx[0] + y * (nsym + 1), &pos[0], &scr)
            out[t] = _ratio(mt, la, lb)
    _scratch_free(&scr)
    return out_arr


def similarity_matrix(const int[::1] codes, const i64[::1] offs, int nsym, int threads):
    """Symmetric m x m ratio matrix; pair (i, j), i < j, computed once as ratio(s_i, s_j)."""
    cdef Py_ssize_t m = offs.shape[0] - 1
    cdef Py_ssize_t i, j, la, lb, mt, t, maxlen = 0
    cdef double r
    cdef Scratch* sp
    out_arr = np.empty((m, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    sidx_arr, pos_arr = _position_index(codes, offs, nsym)
    cdef i64[::1] sidx = sidx_arr
    cdef int[::1] pos = pos_arr
    cdef const int* cp
    if m == 0:
        return out_arr
    cp = &codes[0] if codes.shape[0] > 0 else NULL
    for t in range(m):
        if offs[t + 1] - offs[t] > maxlen:
            maxlen = offs[t + 1] - offs[t]
    for i in prange(m, nogil=True, num_threads=max(threads, 1), schedule="dynamic"):
        out[i, i] = 1.0
        sp = _scratch_new(maxlen)
        if sp == NULL:
            continue
        la = offs[i + 1] - offs[i]
        for j in range(i + 1, m):
            lb = offs[j + 1] - offs[j]
            mt = _matched(cp + offs[i], la, cp + offs[j], lb,
                          &sidx[0] + j * (nsym + 1), &pos[0], sp)
            r = _ratio(mt, la, lb)
            out[i, j] = r
            out[j, i] = r
        _scratch_del(sp)
    return out_arr


def threshold_table(const int[::1] codes, const i64[::1] offs, int nsym,
                    double threshold, int threads):
    """uint8 table[i, j] = ratio(s_i, s_j) >= threshold (i < j, mirrored).

    Empty strings never pass. Callers sort the strings first so that the
    computed orientation is the lexicographic one.
    """
    cdef Py_ssize_t m = offs.shape[0] - 1
    cdef Py_ssize_t i, j, la, lb, mt, t, maxlen = 0
    cdef unsigned char ok
    cdef Scratch* sp
    out_arr = np.zeros((m, m), dtype=np.uint8)
    cdef unsigned char[:, ::1] out = out_arr
    sidx_arr, pos_arr = _position_index(codes, offs, nsym)
    cdef i64[::1] sidx = sidx_arr
    cdef int[::1] pos = pos_arr
    cdef const int* cp
    if m == 0:
        return out_arr
    cp = &codes[0] if codes.shape[0] > 0 else NULL
    for t in range(m):
        if offs[t + 1] - offs[t] > maxlen:
            maxlen = offs[t + 1] - offs[t]
    for i in prange(m, nogil=True, num_threads=max(threads, 1), schedule="dynamic"):
        la = offs[i + 1] - offs[i]
        if la == 0:
            continue
        out[i, i] = 1 if threshold <= 1.0 else 0
        sp = _scratch_new(maxlen)
        if sp == NULL:
            continue
        for j in range(i + 1, m):
            lb = offs[j + 1] - offs[j]
            if lb == 0:
                continue
            # 2*min/(la+lb) bounds the ratio from above
            if la < lb:
                if (2.0 * la) / <double> (la + lb) < threshold:
                    continue
            elif (2.0 * lb) / <double> (la + lb) < threshold:
                continue
            mt = _matched(cp + offs[i], la, cp + offs[j], lb,
                          &sidx[0] + j * (nsym + 1), &pos[0], sp)
            ok = 1 if _ratio(mt, la, lb) >= threshold else 0
            out[i, j] = ok
            out[j, i] = ok
        _scratch_del(sp)
    return out_arr


cdef inline double _sqdist(const double* x, const double* y, Py_ssize_t d) noexcept nogil:
    cdef double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0, t0, t1, t2, t3
    cdef Py_ssize_t k = 0
    while k + 4 <= d:
        t0 = x[k] - y[k]
        t1 = x[k + 1] - y[k + 1]
        t2 = x[k + 2] - y[k + 2]
        t3 = x[k + 3] - y[k + 3]
        s0 += t0 * t0
        s1 += t1 * t1
        s2 += t2 * t2
        s3 += t3 * t3
        k += 4
    while k < d:
        t0 = x[k] - y[k]
        s0 += t0 * t0
        k += 1
    return (s0 + s1) + (s2 + s3)


def euclidean_distances(const double[:, ::1] X, int threads):
    """Full symmetric Euclidean distance matrix with a fixed summation order."""
    cdef Py_ssize_t m = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t block = 8
    cdef Py_ssize_t nblocks = (m + block - 1) // block
    cdef Py_ssize_t bi, i, j, i0, i1
    cdef double v
    out_arr = np.zeros((m, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if m == 0:
        return out_arr
    for bi in prange(nblocks, nogil=True, num_threads=max(threads, 1), schedule="dynamic"):
        i0 = bi * block
        i1 = i0 + block
        if i1 > m:
            i1 = m
        for j in range(i0 + 1, m):
            for i in range(i0, i1):
                if i >= j:
                    break
                v = sqrt(_sqdist(&X[i, 0], &X[j, 0], d)) if d > 0 else 0.0
                out[i, j] = v
                out[j, i] = v
    return out_arr


# linkage codes shared with kernels.LINKAGES
cdef enum:
    SINGLE = 0
    COMPLETE = 1
    AVERAGE = 2
    CENTROID = 3


cdef struct Agg:
    Py_ssize_t m
    double* stat
    unsigned char* adm
    i64* size
    unsigned char* live
    i64* nnj
    double* nnv
    int linkage
    bint stop_on_block
    double max_distance


cdef inline bint _candidate(Agg* g, Py_ssize_t i, Py_ssize_t j, double* out) noexcept nogil:
    cdef double v
    cdef double st = g.stat[i * g.m + j]
    if not g.stop_on_block and not g.adm[i * g.m + j]:
        return False
    if g.linkage == AVERAGE:
        v = st / (<double> g.size[i] * <double> g.size[j])
    elif g.linkage == CENTROID:
        v = sqrt(st) if st > 0.0 else 0.0
    else:
        v = st
    if v > g.max_distance:
        return False
    out[0] = v
    return True


cdef void _recompute(Agg* g, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t j
    cdef Py_ssize_t bestj = -1
    cdef double bestv = 0.0, v = 0.0
    for j in range(i + 1, g.m):
        if not g.live[j]:
            continue
        if _candidate(g, i, j, &v):
            if bestj < 0 or v < bestv:
                bestj = j
                bestv = v
    g.nnj[i] = bestj
    g.nnv[i] = bestv


def agglomerate(const double[:, ::1] D, const unsigned char[:, ::1] gate,
                int linkage, bint strict, bint stop_on_block, double max_distance):
    """Greedy gated agglomeration.

    Clusters are identified by their founding (lowest) index. Each step takes
    the candidate pair with the lexicographically smallest (distance, a, b).
    In skip mode only gate-admissible pairs are candidates; in stop mode the
    closest pair is taken regardless and, if the gate refuses it, both
    clusters are frozen. Returns (parent, merges) where parent[i] is the
    founder of i's final cluster.
    """
    cdef Py_ssize_t m = D.shape[0]
    cdef Py_ssize_t i, j, a, b, c
    cdef double v = 0.0, bestv, na_, nb_, tot, sa, sb
    cdef Agg g
    stat_arr = np.array(D, dtype=np.float64, copy=True)
    if linkage == CENTROID:
        stat_arr = stat_arr * stat_arr
    adm_arr = np.array(gate, dtype=np.uint8, copy=True)
    size_arr = np.ones(m, dtype=np.int64)
    live_arr = np.ones(m, dtype=np.uint8)
    nnj_arr = np.full(m, -1, dtype=np.int64)
    nnv_arr = np.zeros(m, dtype=np.float64)
    parent_arr = np.arange(m, dtype=np.int64)
    cdef double[:, ::1] stat_v = stat_arr
    cdef unsigned char[:, ::1] adm_v = adm_arr
    cdef i64[::1] size_v = size_arr
    cdef unsigned char[::1] live_v = live_arr
    cdef i64[::1] nnj_v = nnj_arr
    cdef double[::1] nnv_v = nnv_arr
    cdef i64[::1] parent = parent_arr
    merges = []
    if m == 0:
        return parent_arr, merges

    g.m = m
    g.stat = &stat_v[0, 0]
    g.adm = &adm_v[0, 0]
    g.size = &size_v[0]
    g.live = &live_v[0]
    g.nnj = &nnj_v[0]
    g.nnv = &nnv_v[0]
    g.linkage = linkage
    g.stop_on_block = stop_on_block
    g.max_distance = max_distance

    with nogil:
        for i in range(m):
            _recompute(&g, i)

    while True:
        a = -1
        bestv = 0.0
        with nogil:
            for i in range(m):
                if g.live[i] and g.nnj[i] >= 0:
                    if a < 0 or g.nnv[i] < bestv:
                        a = i
                        bestv = g.nnv[i]
        if a < 0:
            break
        b = g.nnj[a]
        if stop_on_block and not g.adm[a * m + b]:
            with nogil:
                g.live[a] = 0
                g.live[b] = 0
                g.nnj[a] = -1
                g.nnj[b] = -1
                for i in range(m):
                    if g.live[i] and (g.nnj[i] == a or g.nnj[i] == b):
                        _recompute(&g, i)
            continue

        with nogil:
            na_ = <double> g.size[a]
            nb_ = <double> g.size[b]
            tot = na_ + nb_
            for c in range(m):
                if not g.live[c] or c == a or c == b:
                    continue
                sa = g.stat[a * m + c]
                sb = g.stat[b * m + c]
                if linkage == AVERAGE:
                    v = sa + sb
                elif linkage == SINGLE:
                    v = sa if sa <= sb else sb
                elif linkage == COMPLETE:
                    v = sa if sa >= sb else sb
                else:
                    v = (na_ * sa + nb_ * sb) / tot - na_ * nb_ * g.stat[a * m + b] / (tot * tot)
                    if v < 0.0:
                        v = 0.0
                g.stat[a * m + c] = v
                g.stat[c * m + a] = v
                if strict:
                    g.adm[a * m + c] = g.adm[a * m + c] & g.adm[b * m + c]
                    g.adm[c * m + a] = g.adm[a * m + c]
            g.size[a] += g.size[b]
            g.live[b] = 0
            g.nnj[b] = -1
            parent[b] = a
        merges.append((a, b, bestv))

        with nogil:
            _recompute(&g, a)
            for i in range(a):
                if not g.live[i]:
                    continue
                if g.nnj[i] == a or g.nnj[i] == b:
                    _recompute(&g, i)
                elif _candidate(&g, i, a, &v):
                    if g.nnj[i] < 0 or v < g.nnv[i] or (v == g.nnv[i] and a < g.nnj[i]):
                        g.nnj[i] = a
                        g.nnv[i] = v
            for i in range(a + 1, b):
                if g.live[i] and g.nnj[i] == b:
                    _recompute(&g, i)

    # parent pointers always point to a lower founder; resolve in index order
    for i in range(m):
        parent[i] = parent[parent[i]]
    return parent_arr, merges
