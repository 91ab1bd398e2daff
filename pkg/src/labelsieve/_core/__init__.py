"""Hot-kernel backend selection.

Tries the compiled extension first and falls back to the pure numpy/heapq
implementations when it is missing (source install without a compiler) or
when LABELSIEVE_FORCE_FALLBACK=1 is set.  Both expose the same three
functions with identical contracts:

    build_graph(vectors, zero_mask, levels, m, ef_construction)
    search_many(vectors, zero_mask, nbrs, cnts, entry, queries, ef, k)
    ova_batch_grad(Z, W, bias, pair_i, pair_j, y, dW, dbias, dZ)
"""

from __future__ import annotations

import os

from labelsieve._core import _fallback

if os.environ.get("LABELSIEVE_FORCE_FALLBACK") == "1":
    _impl = _fallback
else:
    try:
        from labelsieve._core import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _fallback

BACKEND = _impl.NAME
build_graph = _impl.build_graph
search_many = _impl.search_many
ova_batch_grad = _impl.ova_batch_grad


def has_compiled() -> bool:
    try:
        from labelsieve._core import _kernels  # noqa: F401
        return True
    except ImportError:
        return False
