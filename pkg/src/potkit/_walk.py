"""Compiled random-walk kernels.

A chain is given in CSR form: ``indptr``, ``indices`` and ``cum``, where
``cum[indptr[x]:indptr[x+1]]`` holds cumulative transition probabilities out of
``x``. A row whose total is below one kills the walk with the missing mass.

Each path owns a xoshiro256+ stream seeded by splitmix64 from ``(seed, path
index)``, so results never depend on how paths are split across threads.
The generator lives inside the compiled code because handing a numpy
``Generator`` across the boundary costs more than a typical path.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numba import njit

KILLED = -1

# stop codes per vertex
RUN, TARGET, BOUNDARY = 0, 1, 2
# stop reasons returned by walk()
HIT_TARGET, HIT_BOUNDARY, STEP_CAP = 1, 2, 3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MIX = np.uint64(0xD1B54A32D192ED03)
_S = np.uint64


@njit(cache=True, nogil=True)
def _splitmix(x):
    x = x + _GOLDEN
    z = x
    z = (z ^ (z >> _S(30))) * _M1
    z = (z ^ (z >> _S(27))) * _M2
    return x, z ^ (z >> _S(31))


@njit(cache=True, nogil=True)
def rng_state(seed, index):
    st = np.empty(4, dtype=np.uint64)
    x = _S(seed) ^ (_S(index) * _MIX)
    x, st[0] = _splitmix(x)
    x, st[1] = _splitmix(x ^ _S(index))
    x, st[2] = _splitmix(x)
    x, st[3] = _splitmix(x)
    return st


@njit(cache=True, nogil=True)
def _rotl(x, k):
    return (x << _S(k)) | (x >> _S(64 - k))


@njit(cache=True, nogil=True)
def uniform(st):
    """Next double in [0, 1) from xoshiro256+."""
    result = st[0] + st[3]
    t = st[1] << _S(17)
    st[2] ^= st[0]
    st[3] ^= st[1]
    st[1] ^= st[2]
    st[0] ^= st[3]
    st[2] ^= t
    st[3] = _rotl(st[3], 45)
    return (result >> _S(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def _step(indptr, indices, cum, x, u):
    for k in range(indptr[x], indptr[x + 1]):
        if u < cum[k]:
            return indices[k]
    return KILLED


@njit(cache=True, nogil=True)
def _first_or_step(indptr, indices, cum, x, t, first_cum, first_idx, u):
    if t == 0 and first_cum.shape[0] > 0:
        for k in range(first_cum.shape[0]):
            if u < first_cum[k]:
                return first_idx[k]
        return KILLED
    return _step(indptr, indices, cum, x, u)


@njit(cache=True, nogil=True)
def walk(indptr, indices, cum, start, first_cum, first_idx, stop_code, cap, seed, index):
    """One path from ``start``; ``first_*`` optionally override the first step's law."""
    st = rng_state(seed, index)
    buf = np.empty(1024, dtype=np.int64)
    buf[0] = start
    n = 1
    x = start
    if stop_code[x] != RUN:
        return buf[:1], stop_code[x]
    reason = STEP_CAP
    for t in range(cap):
        y = _first_or_step(indptr, indices, cum, x, t, first_cum, first_idx, uniform(st))
        if y == KILLED:
            reason = HIT_BOUNDARY
            break
        if n == buf.shape[0]:
            nb = np.empty(2 * n, dtype=np.int64)
            nb[:n] = buf
            buf = nb
        buf[n] = y
        n += 1
        x = y
        if stop_code[x] != RUN:
            reason = stop_code[x]
            break
    return buf[:n], reason


@njit(cache=True, nogil=True)
def visit_counts(indptr, indices, cum, start, y, stop_code, cap, level, base, survive, seed, i0, i1):
    """Visits to ``y`` before stopping, for paths ``i0 .. i1-1``.

    Russian roulette on ``level``: each time ``level[x]`` first exceeds
    ``base * 2**j`` the path survives with probability ``survive`` and its
    weight is divided by it. The estimator stays unbiased while long transient excursions are
    cut short. ``base <= 0`` disables the roulette.
    """
    out = np.zeros(i1 - i0)
    for i in range(i0, i1):
        st = rng_state(seed, i)
        x = start
        w = 1.0
        total = 1.0 if x == y else 0.0
        thresh = 2.0 * base
        for t in range(cap):
            if stop_code[x] != RUN:
                break
            x = _step(indptr, indices, cum, x, uniform(st))
            if x == KILLED:
                break
            if x == y:
                total += w
            if base > 0.0:
                dead = False
                while level[x] > thresh:
                    thresh *= 2.0
                    if uniform(st) >= survive:
                        dead = True
                        break
                    w /= survive
                if dead:
                    break
        out[i - i0] = total
    return out


@njit(cache=True, nogil=True)
def end_points(indptr, indices, cum, start, first_cum, first_idx, stop_code, n_steps, seed, i0, i1):
    """Position after ``n_steps`` steps or at the first stop, for paths ``i0 .. i1-1``."""
    out = np.empty(i1 - i0, dtype=np.int64)
    for i in range(i0, i1):
        st = rng_state(seed, i)
        x = start
        for t in range(n_steps):
            if t > 0 and stop_code[x] != RUN:
                break
            x = _first_or_step(indptr, indices, cum, x, t, first_cum, first_idx, uniform(st))
            if x == KILLED:
                break
        out[i - i0] = x
    return out


@njit(cache=True, nogil=True)
def loop_erase_array(path, n_vertices):
    """Chronological loop erasure via last-exit successors."""
    nxt = np.full(n_vertices, -1, dtype=np.int64)
    m = path.shape[0]
    for i in range(m - 1):
        nxt[path[i]] = path[i + 1]
    out = np.empty(m, dtype=np.int64)
    k = 0
    x = path[0]
    last = path[m - 1]
    while True:
        out[k] = x
        k += 1
        if x == last:
            break
        x = nxt[x]
    return out[:k]


@njit(cache=True, nogil=True)
def wilson_fill(indptr, indices, cum, in_tree, parent, order, seed, index):
    """Wilson's algorithm with last-exit pointers; fills ``parent`` in place."""
    st = rng_state(seed, index)
    for i in range(order.shape[0]):
        v = order[i]
        if in_tree[v]:
            continue
        x = v
        while not in_tree[x]:
            y = _step(indptr, indices, cum, x, uniform(st))
            parent[x] = y
            x = y
        x = v
        while not in_tree[x]:
            in_tree[x] = True
            x = parent[x]
    return parent


@njit(cache=True, nogil=True)
def uniforms(seed, index, n):
    st = rng_state(seed, index)
    out = np.empty(n)
    for k in range(n):
        out[k] = uniform(st)
    return out


def chain_arrays(matrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """CSR transition matrix -> (indptr, indices, cumulative probabilities)."""
    m = matrix.tocsr()
    m.sort_indices()
    indptr = m.indptr.astype(np.int64)
    indices = m.indices.astype(np.int64)
    cum = np.empty_like(m.data, dtype=np.float64)
    for x in range(m.shape[0]):
        lo, hi = indptr[x], indptr[x + 1]
        cum[lo:hi] = np.cumsum(m.data[lo:hi])
        if hi > lo and abs(cum[hi - 1] - 1.0) < 1e-12:
            cum[hi - 1] = 1.0 + 1e-12  # guard against round-off at a full row
    return indptr, indices, cum


def parallel_map(fn, n: int, threads: int = 1, chunk: int = 256) -> list:
    """``[fn(i) for i in range(n)]`` evaluated in index chunks; order is preserved."""
    if threads <= 1 or n <= chunk:
        return [fn(i) for i in range(n)]
    blocks = [range(s, min(n, s + chunk)) for s in range(0, n, chunk)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda r: [fn(i) for i in r], blocks))
    return [v for p in parts for v in p]


def batched(kernel, n: int, threads: int = 1, chunk: int = 4096) -> np.ndarray:
    """Concatenate ``kernel(i0, i1)`` over fixed index blocks, in parallel if asked."""
    blocks = [(s, min(n, s + chunk)) for s in range(0, n, chunk)]
    if threads <= 1 or len(blocks) == 1:
        parts = [kernel(a, b) for a, b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: kernel(*ab), blocks))
    return np.concatenate(parts) if parts else np.empty(0)
