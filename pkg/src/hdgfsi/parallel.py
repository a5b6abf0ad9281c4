"""Element-chunked thread parallelism.

The number of worker threads is read from ``HDG_FSI_THREADS`` (default 1).
Work is split into contiguous element ranges whose outputs land in disjoint
slices, so results do not depend on the thread count.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

ENV_VAR = "HDG_FSI_THREADS"


def thread_count():
    raw = os.environ.get(ENV_VAR, "1").strip()
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{ENV_VAR} must be a positive integer, got {raw!r}")
    return n


def chunks(n, parts):
    edges = np.linspace(0, n, min(parts, max(n, 1)) + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def batched_matvec(a, x, threads=None):
    """``out[e] = a[e] @ x[e]`` for stacks of matrices (ne, m, n) and vectors (ne, n)."""
    threads = thread_count() if threads is None else threads
    out = np.empty(a.shape[:2])
    if threads == 1 or len(a) < 2 * threads:
        np.matmul(a, x[..., None], out=out[..., None])
        return out

    def work(sl):
        np.matmul(a[sl], x[sl, :, None], out=out[sl, :, None])

    with ThreadPoolExecutor(threads) as pool:
        list(pool.map(work, chunks(len(a), threads)))
    return out
