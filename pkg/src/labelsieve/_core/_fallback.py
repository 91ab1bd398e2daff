"""Pure-Python/numpy reference implementations of the hot kernels.

Same contracts as the compiled extension module; selected automatically when
the extension is unavailable (or forced via LABELSIEVE_FORCE_FALLBACK=1).
The graph routines implement layered proximity-graph construction and beam
search with deterministic tie-breaking: candidate heaps order by (distance,
id) ascending, result eviction drops the largest (distance, id), so lower ids
always win ties.

Distance convention: vectors arrive row-normalized, distance is 1 - dot(q, v);
rows flagged in zero_mask (zero-norm originals) sit at distance 2 from
everything, which ranks them strictly last and makes their cosine score -1.
"""

from __future__ import annotations

import heapq

import numpy as np

NAME = "fallback"


def _dist(vectors: np.ndarray, zero_mask: np.ndarray, q: np.ndarray, j: int) -> float:
    if zero_mask[j]:
        return 2.0
    return 1.0 - float(np.dot(vectors[j], q))


def _search_layer(vectors, zero_mask, nbrs, cnts, q, entries, ef, visited, stamp):
    """Beam search on one layer; returns up to ef hits sorted by (dist, id)."""
    results: list[tuple[float, int]] = []  # max-heap via negated entries
    cand: list[tuple[float, int]] = []
    for d, e in entries:
        if visited[e] == stamp:
            continue
        visited[e] = stamp
        heapq.heappush(cand, (d, e))
        heapq.heappush(results, (-d, -e))
    while cand:
        d, c = heapq.heappop(cand)
        if d > -results[0][0] and len(results) == ef:
            break
        row = nbrs[c]
        for t in range(cnts[c]):
            n = row[t]
            if visited[n] == stamp:
                continue
            visited[n] = stamp
            dn = _dist(vectors, zero_mask, q, n)
            if len(results) < ef or dn < -results[0][0]:
                heapq.heappush(cand, (dn, n))
                heapq.heappush(results, (-dn, -n))
                if len(results) > ef:
                    heapq.heappop(results)
    return sorted((-d, -i) for d, i in results)


def _greedy_descent(vectors, zero_mask, nbrs, cnts, q, cur, d, level_from, level_to):
    """Single-entry greedy walk on layers level_from..level_to (inclusive, descending)."""
    for lev in range(level_from, level_to - 1, -1):
        changed = True
        while changed:
            changed = False
            row = nbrs[lev][cur]
            for t in range(cnts[lev][cur]):
                n = row[t]
                dn = _dist(vectors, zero_mask, q, n)
                if dn < d:
                    d, cur = dn, n
                    changed = True
    return cur, d


def _select_heuristic(vectors, zero_mask, cands, m):
    """Keep a candidate only if no already-kept node is closer to it than the
    query is; cands must be sorted ascending by (dist, id)."""
    selected: list[tuple[float, int]] = []
    for d_c, c in cands:
        if len(selected) == m:
            break
        keep = True
        for _, s in selected:
            if _dist(vectors, zero_mask, vectors[s], c) < d_c:
                keep = False
                break
        if keep:
            selected.append((d_c, c))
    return selected


def build_graph(vectors: np.ndarray, zero_mask: np.ndarray, levels: np.ndarray,
                m: int, ef_construction: int):
    """Insert nodes 0..L-1 in order; returns (per-layer neighbor arrays,
    per-layer counts, entry node)."""
    n = vectors.shape[0]
    max_level = int(levels.max())
    caps = [2 * m] + [m] * max_level
    nbrs = [np.full((n, caps[lev]), -1, dtype=np.int32) for lev in range(max_level + 1)]
    cnts = [np.zeros(n, dtype=np.int32) for _ in range(max_level + 1)]
    visited = np.zeros(n, dtype=np.int64)
    stamp = 0
    entry = 0
    entry_level = int(levels[0])

    for i in range(1, n):
        lev_i = int(levels[i])
        q = vectors[i]
        cur = entry
        d = _dist(vectors, zero_mask, q, cur)
        if entry_level > lev_i:
            cur, d = _greedy_descent(vectors, zero_mask, nbrs, cnts, q, cur, d,
                                     entry_level, lev_i + 1)
        entries = [(d, cur)]
        for lev in range(min(entry_level, lev_i), -1, -1):
            stamp += 1
            res = _search_layer(vectors, zero_mask, nbrs[lev], cnts[lev], q,
                                entries, ef_construction, visited, stamp)
            selected = _select_heuristic(vectors, zero_mask, res, m)
            cnts[lev][i] = len(selected)
            for t, (_, s) in enumerate(selected):
                nbrs[lev][i, t] = s
            cap = caps[lev]
            for d_s, s in selected:
                cn = int(cnts[lev][s])
                if cn < cap:
                    nbrs[lev][s, cn] = i
                    cnts[lev][s] = cn + 1
                else:
                    merged = [(_dist(vectors, zero_mask, vectors[s], int(x)), int(x))
                              for x in nbrs[lev][s, :cn]]
                    merged.append((d_s, i))
                    merged.sort()
                    keep = _select_heuristic(vectors, zero_mask, merged, cap)
                    cnts[lev][s] = len(keep)
                    nbrs[lev][s, :] = -1
                    for t, (_, x) in enumerate(keep):
                        nbrs[lev][s, t] = x
            entries = [selected[0]] if selected else entries
        if lev_i > entry_level:
            entry = i
            entry_level = lev_i
    return nbrs, cnts, entry


def search_many(vectors, zero_mask, nbrs, cnts, entry, queries, ef, k):
    """Top-k (dist, id) per query row; ids padded with -1, dists with +inf."""
    n_q = queries.shape[0]
    max_level = len(nbrs) - 1
    ids = np.full((n_q, k), -1, dtype=np.int32)
    dists = np.full((n_q, k), np.inf, dtype=np.float64)
    visited = np.zeros(vectors.shape[0], dtype=np.int64)
    beam = max(ef, k)
    for qi in range(n_q):
        q = queries[qi]
        cur = entry
        d = _dist(vectors, zero_mask, q, cur)
        if max_level > 0:
            cur, d = _greedy_descent(vectors, zero_mask, nbrs, cnts, q, cur, d,
                                     max_level, 1)
        res = _search_layer(vectors, zero_mask, nbrs[0], cnts[0], q,
                            [(d, cur)], beam, visited, qi + 1)
        for t, (dt, it) in enumerate(res[:k]):
            ids[qi, t] = it
            dists[qi, t] = dt
    return ids, dists


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def ova_batch_grad(Z, W, bias, pair_i, pair_j, y, dW, dbias, dZ):
    """Accumulate gradients of sum-over-pairs BCE-with-logits.

    Adds into dW rows/dbias entries for labels present in pair_j and into dZ
    rows for points present in pair_i; returns the batch loss.  Caller is
    responsible for zeroing the touched buffer rows beforehand.
    """
    if len(pair_i) == 0:
        return 0.0
    labels, inv = np.unique(pair_j, return_inverse=True)
    w_u = W[labels]
    logits = Z @ w_u.T + bias[labels]
    x = logits[pair_i, inv]
    loss = float(np.sum(np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))))
    resid = _stable_sigmoid(x) - y
    # accumulate, don't assign: repeated (i, j) pairs must sum like the loss
    flat = pair_i.astype(np.int64) * len(labels) + inv
    scatter = np.bincount(flat, weights=resid,
                          minlength=logits.size).reshape(logits.shape)
    dW[labels] += scatter.T @ Z
    dbias[labels] += np.bincount(inv, weights=resid, minlength=len(labels))
    dZ += scatter @ w_u
    return loss
