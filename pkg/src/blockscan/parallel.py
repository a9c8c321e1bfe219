"""Deterministic process-parallel map over ordered task lists."""
from __future__ import annotations

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits


def chunk(items, n_chunks):
    """Split ``items`` into at most ``n_chunks`` contiguous, order-preserving pieces."""
    n_chunks = max(1, min(n_chunks, len(items)))
    return [[items[i] for i in idx] for idx in np.array_split(np.arange(len(items)), n_chunks) if len(idx)]


def _run(work, part):
    # one BLAS thread everywhere so results never depend on the worker count
    with threadpool_limits(limits=1):
        return work(part)


def run_chunks(work, items, threads=1, chunks_per_thread=4):
    """Apply ``work`` (list -> list) to contiguous chunks of ``items`` and concatenate.

    The output order equals the input order whatever the number of worker
    processes.
    """
    items = list(items)
    if not items:
        return []
    if threads <= 1:
        return _run(work, items)
    parts = chunk(items, threads * chunks_per_thread)
    outs = Parallel(n_jobs=threads, backend="loky")(delayed(_run)(work, part) for part in parts)
    return [x for out in outs for x in out]
