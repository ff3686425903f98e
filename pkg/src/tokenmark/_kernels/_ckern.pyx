# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend.

Same contracts as pure.py; per-sequence scalar loops with the GIL released,
so callers can spread sequence blocks over a thread pool. Kernels perform
only integer PRG steps, swaps, binary searches, and comparisons, which keeps
them bit-identical to the pure backend.
"""

import numpy as np

from libc.stdint cimport int32_t, int64_t, uint8_t, uint32_t, uint64_t

IMPL = "compiled"

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15U
cdef uint64_t M1 = 0xBF58476D1CE4E5B9U
cdef uint64_t M2 = 0x94D049BB133111EBU
cdef uint64_t FNV_OFF = 0xCBF29CE484222325U
cdef uint64_t FNV_PRIME = 0x100000001B3U
cdef double TO_UNIT = 2.0 ** -53


cdef inline uint64_t mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * M1
    z = (z ^ (z >> 27)) * M2
    return z ^ (z >> 31)


cdef inline double next_unit(uint64_t *state) nogil:
    state[0] += GOLDEN
    return <double>(mix64(state[0]) >> 11) * TO_UNIT


cdef inline uint64_t fnv1a_row(const uint32_t *ids, Py_ssize_t n) nogil:
    cdef uint64_t h = FNV_OFF
    cdef uint32_t x
    cdef Py_ssize_t i
    for i in range(n):
        x = ids[i]
        h = (h ^ (x & 0xFFu)) * FNV_PRIME
        h = (h ^ ((x >> 8) & 0xFFu)) * FNV_PRIME
        h = (h ^ ((x >> 16) & 0xFFu)) * FNV_PRIME
        h = (h ^ ((x >> 24) & 0xFFu)) * FNV_PRIME
    return h


cdef inline void fill_partition(uint64_t seed, int vocab, int n_green,
                                int32_t *perm, uint8_t *member) nogil:
    # Ascending partial Fisher-Yates: positions 0..n_green-1 are final after
    # n_green steps, so the tail of the shuffle is never materialized.
    cdef int i, j
    cdef uint64_t state = seed
    cdef int32_t tmp
    for i in range(vocab):
        perm[i] = i
        member[i] = 0
    for i in range(n_green):
        state += GOLDEN
        j = i + <int>(mix64(state) % <uint64_t>(vocab - i))
        tmp = perm[j]
        perm[j] = perm[i]
        perm[i] = tmp
        member[tmp] = 1


cdef inline int upper_bound(const double *c, int n, double u) nogil:
    # First index with c[idx] > u, clamped to n-1 (== searchsorted side='right').
    cdef int lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if u < c[mid]:
            hi = mid
        else:
            lo = mid + 1
    if lo > n - 1:
        lo = n - 1
    return lo


def hash_units(units):
    units = np.ascontiguousarray(units, dtype=np.uint32)
    if units.ndim != 2:
        raise ValueError("hash_units expects a (batch, unit_len) array")
    cdef const uint32_t[:, ::1] u = units
    cdef Py_ssize_t b = u.shape[0], t = u.shape[1]
    out = np.empty(b, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t r
    with nogil:
        for r in range(b):
            o[r] = fnv1a_row(&u[r, 0] if t > 0 else NULL, t)
    return out


def partition_green(seeds, int vocab, int n_green):
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    cdef const uint64_t[::1] s = seeds
    cdef Py_ssize_t b = s.shape[0]
    out = np.empty((b, n_green), dtype=np.int32)
    cdef int32_t[:, ::1] o = out
    perm_arr = np.empty(vocab, dtype=np.int32)
    memb_arr = np.empty(vocab, dtype=np.uint8)
    cdef int32_t[::1] perm = perm_arr
    cdef uint8_t[::1] memb = memb_arr
    cdef Py_ssize_t r
    cdef int i
    with nogil:
        for r in range(b):
            fill_partition(s[r], vocab, n_green, &perm[0], &memb[0])
            for i in range(n_green):
                o[r, i] = perm[i]
    return out


def detect_green_counts(tokens, unit_sizes, int vocab, int n_green, seed0):
    tokens = np.ascontiguousarray(tokens, dtype=np.int32)
    sizes_arr = np.ascontiguousarray(unit_sizes, dtype=np.int64)
    cdef const int32_t[:, ::1] tok = tokens
    cdef const int64_t[::1] sizes = sizes_arr
    cdef Py_ssize_t b = tok.shape[0], k = sizes.shape[0]
    counts = np.empty((b, k), dtype=np.int32)
    cdef int32_t[:, ::1] cnt = counts
    perm_arr = np.empty(vocab, dtype=np.int32)
    memb_arr = np.empty(vocab, dtype=np.uint8)
    cdef int32_t[::1] perm = perm_arr
    cdef uint8_t[::1] memb = memb_arr
    cdef uint64_t s0 = seed0
    cdef Py_ssize_t r, i, j, pos
    cdef uint64_t seed
    cdef int64_t t
    cdef int c
    with nogil:
        for r in range(b):
            seed = s0
            pos = 0
            for i in range(k):
                t = sizes[i]
                fill_partition(seed, vocab, n_green, &perm[0], &memb[0])
                c = 0
                for j in range(t):
                    c += memb[tok[r, pos + j]]
                cnt[r, i] = c
                seed = fnv1a_row(<const uint32_t *> &tok[r, pos], t)
                pos += t
    return counts


def sample_sequences(cdf, unit_sizes, int vocab, int n_green, seed0,
                     double red_accept, seeds, bint watermark):
    cdf = np.ascontiguousarray(cdf, dtype=np.float64)
    sizes_arr = np.ascontiguousarray(unit_sizes, dtype=np.int64)
    seeds = np.ascontiguousarray(seeds, dtype=np.uint64)
    cdef const double[:, ::1] c = cdf
    cdef const int64_t[::1] sizes = sizes_arr
    cdef const uint64_t[::1] s = seeds
    cdef Py_ssize_t total = c.shape[0]
    cdef int n = <int> c.shape[1]
    cdef Py_ssize_t b = s.shape[0], k = sizes.shape[0]
    tokens = np.empty((b, total), dtype=np.int32)
    cdef int32_t[:, ::1] tok = tokens
    green = np.empty((b, total), dtype=np.uint8) if watermark else None
    cdef uint8_t[:, ::1] g = green if watermark else np.empty((1, 1), dtype=np.uint8)
    perm_arr = np.empty(vocab, dtype=np.int32)
    memb_arr = np.empty(vocab, dtype=np.uint8)
    cdef int32_t[::1] perm = perm_arr
    cdef uint8_t[::1] memb = memb_arr
    cdef uint64_t s0 = seed0
    cdef Py_ssize_t r, i, j, pos
    cdef uint64_t state, seed
    cdef int64_t t
    cdef int cand
    cdef double u, v
    with nogil:
        for r in range(b):
            state = s[r]
            seed = s0
            pos = 0
            for i in range(k):
                t = sizes[i]
                if watermark:
                    fill_partition(seed, vocab, n_green, &perm[0], &memb[0])
                for j in range(t):
                    if not watermark:
                        u = next_unit(&state)
                        tok[r, pos] = upper_bound(&c[pos, 0], n, u)
                    else:
                        while True:
                            u = next_unit(&state)
                            cand = upper_bound(&c[pos, 0], n, u)
                            if memb[cand]:
                                break
                            if red_accept >= 1.0:
                                break
                            v = next_unit(&state)
                            if v < red_accept:
                                break
                        tok[r, pos] = cand
                        g[r, pos] = memb[cand]
                    pos += 1
                if watermark:
                    seed = fnv1a_row(<const uint32_t *> &tok[r, pos - t], t)
    return tokens, green
