"""Compiled extension vs pure-python fallback on the three hot kernels.

Times graph construction, beam search, and the one-vs-all gradient kernel on
the same inputs for both backends and prints a speedup table.  Verifies both
backends reach the same recall before trusting the timings.

    python benchmarks/bench_core.py --labels 4000 --dim 64
"""

import argparse
import time

import numpy as np
from threadpoolctl import threadpool_limits

from labelsieve._core import _fallback
from labelsieve.shortlist import draw_levels

try:
    from labelsieve._core import _kernels
except ImportError:
    _kernels = None


def unit_rows(rng, n, dim):
    v = rng.normal(size=(n, dim))
    return np.ascontiguousarray(v / np.linalg.norm(v, axis=1, keepdims=True))


def brute_recall(vectors, queries, ids, k):
    hits = 0
    dists = 1.0 - queries @ vectors.T
    for i, row in enumerate(dists):
        want = np.lexsort((np.arange(len(row)), row))[:k]
        hits += len(np.intersect1d(ids[i], want))
    return hits / (len(queries) * k)


def bench_graph(impl, vectors, zero, levels, queries, args):
    t0 = time.perf_counter()
    nbrs, cnts, entry = impl.build_graph(vectors, zero, levels, args.m,
                                         args.ef_construction)
    build_s = time.perf_counter() - t0

    impl.search_many(vectors, zero, nbrs, cnts, entry, queries[:5],
                     args.ef_search, args.k)  # warm
    t0 = time.perf_counter()
    ids, _ = impl.search_many(vectors, zero, nbrs, cnts, entry, queries,
                              args.ef_search, args.k)
    search_s = time.perf_counter() - t0
    return build_s, search_s, brute_recall(vectors, queries, ids, args.k)


def bench_grad(impl, case, repeats):
    Z, W, bias, pi, pj, y = case
    dW = np.zeros_like(W)
    dbias = np.zeros_like(bias)
    dZ = np.zeros_like(Z)
    impl.ova_batch_grad(Z, W, bias, pi, pj, y, dW, dbias, dZ)  # warm
    t0 = time.perf_counter()
    for _ in range(repeats):
        dW[:] = 0.0
        dbias[:] = 0.0
        dZ[:] = 0.0
        impl.ova_batch_grad(Z, W, bias, pi, pj, y, dW, dbias, dZ)
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--labels", type=int, default=4000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--queries", type=int, default=500)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--m", type=int, default=16)
    parser.add_argument("--ef-construction", type=int, default=200)
    parser.add_argument("--ef-search", type=int, default=100)
    parser.add_argument("--grad-points", type=int, default=256)
    parser.add_argument("--grad-pairs", type=int, default=100_000)
    parser.add_argument("--grad-repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    vectors = unit_rows(rng, args.labels, args.dim)
    zero = np.zeros(args.labels, dtype=np.uint8)
    levels = draw_levels(args.labels, args.m, np.random.default_rng(args.seed + 1))
    queries = unit_rows(rng, args.queries, args.dim)

    Z = rng.normal(size=(args.grad_points, args.dim))
    W = rng.normal(size=(args.labels, args.dim))
    bias = rng.normal(size=args.labels)
    pi = rng.integers(0, args.grad_points, args.grad_pairs).astype(np.int32)
    pj = rng.integers(0, args.labels, args.grad_pairs).astype(np.int32)
    y = (rng.random(args.grad_pairs) < 0.1).astype(np.float64)
    grad_case = (Z, W, bias, pi, pj, y)

    backends = [("fallback", _fallback)]
    if _kernels is not None:
        backends.insert(0, ("compiled", _kernels))
    else:
        print("extension not built; timing the fallback only")

    print(f"L={args.labels} D={args.dim} queries={args.queries} k={args.k} "
          f"m={args.m} efc={args.ef_construction} efs={args.ef_search} "
          f"grad pairs={args.grad_pairs}")
    print(f"{'backend':<10} {'build s':>9} {'search ms/q':>12} "
          f"{'recall':>7} {'grad ms':>9}")
    rows = {}
    with threadpool_limits(limits=1):
        for name, impl in backends:
            build_s, search_s, recall = bench_graph(impl, vectors, zero,
                                                    levels, queries, args)
            grad_s = bench_grad(impl, grad_case, args.grad_repeats)
            rows[name] = (build_s, search_s, grad_s)
            print(f"{name:<10} {build_s:9.3f} "
                  f"{1000 * search_s / args.queries:12.4f} {recall:7.4f} "
                  f"{1000 * grad_s:9.3f}")

    if len(rows) == 2:
        c, f = rows["compiled"], rows["fallback"]
        print(f"{'speedup':<10} {f[0] / c[0]:9.1f}x "
              f"{f[1] / c[1]:11.1f}x {'':>7} {f[2] / c[2]:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
