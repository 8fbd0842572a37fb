"""Deterministic, compensated row reductions and target-parallel evaluation.

All dense sums in the package go through :func:`row_sum`.  A row is reduced
in fixed source order: contiguous blocks are summed pairwise by numpy, and the
block partials are combined with Neumaier compensation.  The result for one
row never depends on how many rows are processed together, so splitting the
targets across threads reproduces the serial output bit for bit.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 256
TARGET_CHUNK = 128
THREADS_ENV = "IRRSIO_THREADS"

_threads = None


def set_threads(n):
    """Set the worker count used by :func:`map_target_chunks` (``None`` resets)."""
    global _threads
    if n is not None and int(n) < 1:
        raise ValueError("thread count must be >= 1")
    _threads = None if n is None else int(n)


def get_threads():
    if _threads is not None:
        return _threads
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return 1


def row_sum(a):
    """Sum ``a`` over its last axis with a fixed, compensated reduction order."""
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    if n <= BLOCK:
        return np.ascontiguousarray(a).sum(axis=-1)
    nblocks = -(-n // BLOCK)
    pad = nblocks * BLOCK - n
    if pad:
        widths = [(0, 0)] * (a.ndim - 1) + [(0, pad)]
        a = np.pad(a, widths)
    partial = np.ascontiguousarray(a).reshape(a.shape[:-1] + (nblocks, BLOCK)).sum(axis=-1)
    s = partial[..., 0].copy()
    c = np.zeros_like(s)
    for b in range(1, nblocks):
        x = partial[..., b]
        t = s + x
        big = np.abs(s) >= np.abs(x)
        c += np.where(big, (s - t) + x, (x - t) + s)
        s = t
    return s + c


def map_target_chunks(fn, n_targets, chunk=TARGET_CHUNK, threads=None):
    """Evaluate ``fn(start, stop)`` over target blocks and concatenate results.

    ``fn`` must return an array whose first axis indexes targets.  Blocks are
    reassembled in index order regardless of completion order.
    """
    if n_targets == 0:
        return None
    bounds = [(s, min(s + chunk, n_targets)) for s in range(0, n_targets, chunk)]
    threads = get_threads() if threads is None else threads
    if threads <= 1 or len(bounds) == 1:
        parts = [fn(s, e) for s, e in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: fn(*b), bounds))
    return np.concatenate(parts, axis=0)
