# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: layered proximity-graph build/search and the
one-vs-all per-pair gradient accumulation.

Mirrors the fallback module's algorithms and tie-breaking exactly: heaps
order by (distance, id), eviction drops the largest pair, zero-norm rows sit
at distance 2.
"""

from libc.math cimport exp, log1p

import numpy as np

NAME = "compiled"


cdef inline double _dist_q(const double[:, ::1] vectors, const unsigned char[::1] zero_mask,
                           const double[::1] q, Py_ssize_t j) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t d
    if zero_mask[j]:
        return 2.0
    for d in range(vectors.shape[1]):
        s += vectors[j, d] * q[d]
    return 1.0 - s


cdef inline double _dist_rows(const double[:, ::1] vectors, const unsigned char[::1] zero_mask,
                              Py_ssize_t i, Py_ssize_t j) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t d
    if zero_mask[j]:
        return 2.0
    for d in range(vectors.shape[1]):
        s += vectors[j, d] * vectors[i, d]
    return 1.0 - s


# binary heaps over parallel (dist, id) arrays; min variant pops the smallest
# (dist, id), max variant pops the largest, so equal distances resolve by id

cdef inline void _min_push(double[::1] hd, int[::1] hi, int* n, double d, int i) nogil:
    cdef int c = n[0]
    cdef int p
    cdef double td
    cdef int ti
    hd[c] = d
    hi[c] = i
    n[0] = c + 1
    while c > 0:
        p = (c - 1) >> 1
        if hd[p] > hd[c] or (hd[p] == hd[c] and hi[p] > hi[c]):
            td = hd[p]; hd[p] = hd[c]; hd[c] = td
            ti = hi[p]; hi[p] = hi[c]; hi[c] = ti
            c = p
        else:
            break


cdef inline void _min_pop(double[::1] hd, int[::1] hi, int* n) nogil:
    cdef int c = 0, l, r, sm, last
    cdef double td
    cdef int ti
    n[0] -= 1
    last = n[0]
    hd[0] = hd[last]
    hi[0] = hi[last]
    while True:
        l = 2 * c + 1
        r = l + 1
        sm = c
        if l < last and (hd[l] < hd[sm] or (hd[l] == hd[sm] and hi[l] < hi[sm])):
            sm = l
        if r < last and (hd[r] < hd[sm] or (hd[r] == hd[sm] and hi[r] < hi[sm])):
            sm = r
        if sm == c:
            break
        td = hd[sm]; hd[sm] = hd[c]; hd[c] = td
        ti = hi[sm]; hi[sm] = hi[c]; hi[c] = ti
        c = sm


cdef inline void _max_push(double[::1] hd, int[::1] hi, int* n, double d, int i) nogil:
    cdef int c = n[0]
    cdef int p
    cdef double td
    cdef int ti
    hd[c] = d
    hi[c] = i
    n[0] = c + 1
    while c > 0:
        p = (c - 1) >> 1
        if hd[p] < hd[c] or (hd[p] == hd[c] and hi[p] < hi[c]):
            td = hd[p]; hd[p] = hd[c]; hd[c] = td
            ti = hi[p]; hi[p] = hi[c]; hi[c] = ti
            c = p
        else:
            break


cdef inline void _max_pop(double[::1] hd, int[::1] hi, int* n) nogil:
    cdef int c = 0, l, r, lg, last
    cdef double td
    cdef int ti
    n[0] -= 1
    last = n[0]
    hd[0] = hd[last]
    hi[0] = hi[last]
    while True:
        l = 2 * c + 1
        r = l + 1
        lg = c
        if l < last and (hd[l] > hd[lg] or (hd[l] == hd[lg] and hi[l] > hi[lg])):
            lg = l
        if r < last and (hd[r] > hd[lg] or (hd[r] == hd[lg] and hi[r] > hi[lg])):
            lg = r
        if lg == c:
            break
        td = hd[lg]; hd[lg] = hd[c]; hd[c] = td
        ti = hi[lg]; hi[lg] = hi[c]; hi[c] = ti
        c = lg


cdef int _search_layer(const double[:, ::1] vectors, const unsigned char[::1] zero_mask,
                       const int[:, ::1] nbrs, const int[::1] cnts,
                       const double[::1] q, double entry_dist, int entry_id, int ef,
                       long long[::1] visited, long long stamp,
                       double[::1] c_d, int[::1] c_i,
                       double[::1] r_d, int[::1] r_i,
                       double[::1] out_d, int[::1] out_i) nogil:
    """Beam search on one layer; fills out_* ascending by (dist, id)."""
    cdef int nc = 0, nr = 0
    cdef int c, t, nn, count
    cdef double d, dn
    visited[entry_id] = stamp
    _min_push(c_d, c_i, &nc, entry_dist, entry_id)
    _max_push(r_d, r_i, &nr, entry_dist, entry_id)
    while nc > 0:
        d = c_d[0]
        c = c_i[0]
        if nr == ef and d > r_d[0]:
            break
        _min_pop(c_d, c_i, &nc)
        for t in range(cnts[c]):
            nn = nbrs[c, t]
            if visited[nn] == stamp:
                continue
            visited[nn] = stamp
            dn = _dist_q(vectors, zero_mask, q, nn)
            if nr < ef or dn < r_d[0]:
                _min_push(c_d, c_i, &nc, dn, nn)
                _max_push(r_d, r_i, &nr, dn, nn)
                if nr > ef:
                    _max_pop(r_d, r_i, &nr)
    count = nr
    t = count - 1
    while nr > 0:
        out_d[t] = r_d[0]
        out_i[t] = r_i[0]
        _max_pop(r_d, r_i, &nr)
        t -= 1
    return count


cdef void _greedy_layer(const double[:, ::1] vectors, const unsigned char[::1] zero_mask,
                        const int[:, ::1] nbrs, const int[::1] cnts,
                        const double[::1] q, int* cur, double* dist) nogil:
    cdef bint changed = True
    cdef int t, nn, c
    cdef double dn
    while changed:
        changed = False
        c = cur[0]
        for t in range(cnts[c]):
            nn = nbrs[c, t]
            dn = _dist_q(vectors, zero_mask, q, nn)
            if dn < dist[0]:
                dist[0] = dn
                cur[0] = nn
                changed = True


cdef int _select(const double[:, ::1] vectors, const unsigned char[::1] zero_mask,
                 const double[::1] cand_d, const int[::1] cand_i, int n_cand, int m,
                 double[::1] sel_d, int[::1] sel_i) nogil:
    """Heuristic neighbor selection over candidates sorted ascending (dist, id)."""
    cdef int ns = 0, a, b
    cdef bint keep
    for a in range(n_cand):
        if ns == m:
            break
        keep = True
        for b in range(ns):
            if _dist_rows(vectors, zero_mask, sel_i[b], cand_i[a]) < cand_d[a]:
                keep = False
                break
        if keep:
            sel_d[ns] = cand_d[a]
            sel_i[ns] = cand_i[a]
            ns += 1
    return ns


def build_graph(double[:, ::1] vectors, unsigned char[::1] zero_mask,
                int[::1] levels, int m, int ef_construction):
    """Insert nodes 0..L-1 in order; returns (neighbor arrays, counts, entry)."""
    cdef int n = vectors.shape[0]
    cdef int max_level = 0
    cdef int i
    for i in range(n):
        if levels[i] > max_level:
            max_level = levels[i]

    caps = [2 * m] + [m] * max_level
    nbrs_arrays = [np.full((n, caps[lev]), -1, dtype=np.int32) for lev in range(max_level + 1)]
    cnts_arrays = [np.zeros(n, dtype=np.int32) for _ in range(max_level + 1)]

    visited_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] visited = visited_arr
    cdef long long stamp = 0

    buf = max(ef_construction, 2 * m) + 2 * m + 2
    cdef double[::1] c_d = np.empty(n + 1, dtype=np.float64)
    cdef int[::1] c_i = np.empty(n + 1, dtype=np.int32)
    cdef double[::1] r_d = np.empty(buf, dtype=np.float64)
    cdef int[::1] r_i = np.empty(buf, dtype=np.int32)
    cdef double[::1] out_d = np.empty(buf, dtype=np.float64)
    cdef int[::1] out_i = np.empty(buf, dtype=np.int32)
    cdef double[::1] sel_d = np.empty(buf, dtype=np.float64)
    cdef int[::1] sel_i = np.empty(buf, dtype=np.int32)
    cdef double[::1] mrg_d = np.empty(buf, dtype=np.float64)
    cdef int[::1] mrg_i = np.empty(buf, dtype=np.int32)

    cdef int entry = 0
    cdef int entry_level = levels[0]
    cdef int lev_i, lev, cur, n_res, n_sel, t, s, cn, cap, a, nm
    cdef double d, ds
    cdef const double[::1] q
    cdef int[:, ::1] layer_nbrs
    cdef int[::1] layer_cnts

    for i in range(1, n):
        lev_i = levels[i]
        q = vectors[i]
        cur = entry
        d = _dist_rows(vectors, zero_mask, i, cur)
        for lev in range(entry_level, lev_i, -1):
            layer_nbrs = nbrs_arrays[lev]
            layer_cnts = cnts_arrays[lev]
            _greedy_layer(vectors, zero_mask, layer_nbrs, layer_cnts, q, &cur, &d)
        lev = min(entry_level, lev_i)
        while lev >= 0:
            layer_nbrs = nbrs_arrays[lev]
            layer_cnts = cnts_arrays[lev]
            cap = 2 * m if lev == 0 else m
            stamp += 1
            n_res = _search_layer(vectors, zero_mask, layer_nbrs, layer_cnts, q,
                                  d, cur, ef_construction, visited, stamp,
                                  c_d, c_i, r_d, r_i, out_d, out_i)
            n_sel = _select(vectors, zero_mask, out_d, out_i, n_res, m, sel_d, sel_i)
            layer_cnts[i] = n_sel
            for t in range(n_sel):
                layer_nbrs[i, t] = sel_i[t]
            for t in range(n_sel):
                s = sel_i[t]
                ds = sel_d[t]
                cn = layer_cnts[s]
                if cn < cap:
                    layer_nbrs[s, cn] = i
                    layer_cnts[s] = cn + 1
                else:
                    # overflow: re-select cap neighbors from existing plus the
                    # newcomer, by distance to the host node
                    for a in range(cn):
                        mrg_d[a] = _dist_rows(vectors, zero_mask, s, layer_nbrs[s, a])
                        mrg_i[a] = layer_nbrs[s, a]
                    mrg_d[cn] = ds
                    mrg_i[cn] = i
                    nm = cn + 1
                    _sort_pairs(mrg_d, mrg_i, nm)
                    nm = _select(vectors, zero_mask, mrg_d, mrg_i, nm, cap,
                                 c_d, c_i)  # reuse candidate buffers as scratch
                    layer_cnts[s] = nm
                    for a in range(cap):
                        layer_nbrs[s, a] = c_i[a] if a < nm else -1
            cur = sel_i[0]
            d = sel_d[0]
            lev -= 1
        if lev_i > entry_level:
            entry = i
            entry_level = lev_i
    return nbrs_arrays, cnts_arrays, entry


cdef void _sort_pairs(double[::1] hd, int[::1] hi, int n) nogil:
    """Insertion sort ascending by (dist, id); n stays small (<= cap + 1)."""
    cdef int a, b
    cdef double td
    cdef int ti
    for a in range(1, n):
        td = hd[a]
        ti = hi[a]
        b = a - 1
        while b >= 0 and (hd[b] > td or (hd[b] == td and hi[b] > ti)):
            hd[b + 1] = hd[b]
            hi[b + 1] = hi[b]
            b -= 1
        hd[b + 1] = td
        hi[b + 1] = ti


def search_many(double[:, ::1] vectors, unsigned char[::1] zero_mask,
                list nbrs_arrays, list cnts_arrays, int entry,
                double[:, ::1] queries, int ef, int k):
    """Top-k (id, dist) rows per query; ids padded with -1, dists with +inf."""
    cdef int n = vectors.shape[0]
    cdef int n_q = queries.shape[0]
    cdef int max_level = len(nbrs_arrays) - 1
    cdef int beam = ef if ef > k else k

    ids_arr = np.full((n_q, k), -1, dtype=np.int32)
    dists_arr = np.full((n_q, k), np.inf, dtype=np.float64)
    cdef int[:, ::1] ids = ids_arr
    cdef double[:, ::1] dists = dists_arr

    visited_arr = np.zeros(n, dtype=np.int64)
    cdef long long[::1] visited = visited_arr
    cdef double[::1] c_d = np.empty(n + 1, dtype=np.float64)
    cdef int[::1] c_i = np.empty(n + 1, dtype=np.int32)
    cdef double[::1] r_d = np.empty(beam + 2, dtype=np.float64)
    cdef int[::1] r_i = np.empty(beam + 2, dtype=np.int32)
    cdef double[::1] out_d = np.empty(beam + 2, dtype=np.float64)
    cdef int[::1] out_i = np.empty(beam + 2, dtype=np.int32)

    cdef int[:, ::1] layer_nbrs
    cdef int[::1] layer_cnts
    cdef const double[::1] q
    cdef int qi, cur, lev, n_res, t
    cdef double d

    for qi in range(n_q):
        q = queries[qi]
        cur = entry
        d = _dist_q(vectors, zero_mask, q, cur)
        for lev in range(max_level, 0, -1):
            layer_nbrs = nbrs_arrays[lev]
            layer_cnts = cnts_arrays[lev]
            _greedy_layer(vectors, zero_mask, layer_nbrs, layer_cnts, q, &cur, &d)
        layer_nbrs = nbrs_arrays[0]
        layer_cnts = cnts_arrays[0]
        n_res = _search_layer(vectors, zero_mask, layer_nbrs, layer_cnts, q,
                              d, cur, beam, visited, qi + 1,
                              c_d, c_i, r_d, r_i, out_d, out_i)
        if n_res > k:
            n_res = k
        for t in range(n_res):
            ids[qi, t] = out_i[t]
            dists[qi, t] = out_d[t]
    return ids_arr, dists_arr


def ova_batch_grad(double[:, ::1] Z, double[:, ::1] W, double[::1] bias,
                   int[::1] pair_i, int[::1] pair_j, double[::1] y,
                   double[:, ::1] dW, double[::1] dbias, double[:, ::1] dZ):
    """Accumulate sum-over-pairs BCE-with-logits gradients; returns the loss.

    Touched rows of dW/dbias/dZ must arrive zeroed; per pair (i, j) with
    target y: logit x = Z[i].W[j] + bias[j], residual sigmoid(x) - y flows
    into dW[j] (times Z[i]), dZ[i] (times W[j]) and dbias[j].
    """
    cdef Py_ssize_t n_pairs = pair_i.shape[0]
    cdef Py_ssize_t dim = Z.shape[1]
    cdef Py_ssize_t p, d
    cdef int i, j
    cdef double x, e, sig, r, yp
    cdef double loss = 0.0
    with nogil:
        for p in range(n_pairs):
            i = pair_i[p]
            j = pair_j[p]
            yp = y[p]
            x = bias[j]
            for d in range(dim):
                x += Z[i, d] * W[j, d]
            if x >= 0.0:
                e = exp(-x)
                loss += x - x * yp + log1p(e)
                sig = 1.0 / (1.0 + e)
            else:
                e = exp(x)
                loss += -x * yp + log1p(e)
                sig = e / (1.0 + e)
            r = sig - yp
            for d in range(dim):
                dW[j, d] += r * Z[i, d]
                dZ[i, d] += r * W[j, d]
            dbias[j] += r
    return loss
