"""Pure-numpy kernel backend.

Implements the same batch kernels as the compiled extension, vectorized
across the sequence axis. Bit-identical to the compiled backend: all float
inputs (clean-token CDF tables) are produced by shared code, and the
kernels themselves only do integer PRG steps, permutation swaps, binary
searches, and comparisons.

Large intermediates — one (rows, vocab) permutation or membership matrix
per autoregressive unit — are bounded by processing sequences in chunks.
"""

from __future__ import annotations

import numpy as np

from .bits import FNV_OFFSET, FNV_PRIME, SM64_GOLDEN, mix64_array as _mix64

IMPL = "pure"

_GOLDEN = np.uint64(SM64_GOLDEN)
_FNV_OFF = np.uint64(FNV_OFFSET)
_FNV_PRIME = np.uint64(FNV_PRIME)
_BYTE = np.uint64(0xFF)
_TO_UNIT = 2.0 ** -53

# Cap transient (rows x vocab) work matrices at ~64 MiB of int32.
_CHUNK_ELEMS = 1 << 24


def _draw_unit(states, idx=None):
    """Advance the selected per-sequence states by one step, return doubles in [0,1)."""
    if idx is None:
        states += _GOLDEN
        out = _mix64(states)
    else:
        states[idx] += _GOLDEN
        out = _mix64(states[idx])
    return (out >> np.uint64(11)).astype(np.float64) * _TO_UNIT


def _chunk_rows(vocab: int) -> int:
    return max(1, _CHUNK_ELEMS // max(vocab, 1))


def hash_units(units: np.ndarray) -> np.ndarray:
    """FNV-1a64 over the little-endian u32 bytes of each row of `units`."""
    units = np.ascontiguousarray(units, dtype=np.uint32)
    if units.ndim != 2:
        raise ValueError("hash_units expects a (batch, unit_len) array")
    b, t = units.shape
    h = np.full(b, _FNV_OFF, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for w in range(t):
            x = units[:, w].astype(np.uint64)
            for shift in (0, 8, 16, 24):
                h = (h ^ ((x >> np.uint64(shift)) & _BYTE)) * _FNV_PRIME
    return h


def partition_green(seeds: np.ndarray, vocab: int, n_green: int) -> np.ndarray:
    """Green-list ids for each seed: the first `n_green` ids of the seeded shuffle.

    The shuffle is an ascending Fisher-Yates driven by SplitMix64; positions
    0..n_green-1 are final after n_green swap steps, so only those are run.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    b = seeds.shape[0]
    out = np.empty((b, n_green), dtype=np.int32)
    rows_per = _chunk_rows(vocab)
    base = np.arange(vocab, dtype=np.int32)
    with np.errstate(over="ignore"):
        for lo in range(0, b, rows_per):
            hi = min(lo + rows_per, b)
            states = seeds[lo:hi].copy()
            n = hi - lo
            perm = np.broadcast_to(base, (n, vocab)).copy()
            rows = np.arange(n)
            for i in range(n_green):
                states += _GOLDEN
                z = _mix64(states)
                j = (i + (z % np.uint64(vocab - i))).astype(np.intp)
                pj = perm[rows, j].copy()
                perm[rows, j] = perm[rows, i]
                perm[rows, i] = pj
            out[lo:hi] = perm[:, :n_green]
    return out


def _membership(green_ids: np.ndarray, vocab: int) -> np.ndarray:
    n = green_ids.shape[0]
    mask = np.zeros((n, vocab), dtype=bool)
    mask[np.arange(n)[:, None], green_ids] = True
    return mask


def detect_green_counts(
    tokens: np.ndarray,
    unit_sizes: np.ndarray,
    vocab: int,
    n_green: int,
    seed0: int,
) -> np.ndarray:
    """Per-unit green counts for a batch of sequences.

    Unit i's partition is seeded by the hash of unit i-1 as observed in
    `tokens` (unit 0 by `seed0`, the hashed sentinel).
    """
    tokens = np.ascontiguousarray(tokens, dtype=np.int32)
    b, total = tokens.shape
    k = len(unit_sizes)
    counts = np.empty((b, k), dtype=np.int32)
    rows_per = _chunk_rows(vocab)
    for lo in range(0, b, rows_per):
        hi = min(lo + rows_per, b)
        chunk = tokens[lo:hi]
        n = hi - lo
        rows = np.arange(n)[:, None]
        seeds = np.full(n, np.uint64(seed0), dtype=np.uint64)
        pos = 0
        for i, t in enumerate(unit_sizes):
            t = int(t)
            unit = chunk[:, pos : pos + t]
            mask = _membership(partition_green(seeds, vocab, n_green), vocab)
            counts[lo:hi, i] = mask[rows, unit].sum(axis=1)
            seeds = hash_units(unit)
            pos += t
    return counts


def sample_sequences(
    cdf: np.ndarray,
    unit_sizes: np.ndarray,
    vocab: int,
    n_green: int,
    seed0: int,
    red_accept: float,
    seeds: np.ndarray,
    watermark: bool,
):
    """Sample a batch of sequences from per-position clean CDFs.

    Clean mode draws one inverse-CDF token per position. Watermark mode
    samples the biased-softmax distribution by rejection against the clean
    CDF: a green candidate is always kept, a red candidate survives with
    probability `red_accept` = exp(-delta). Returns (tokens, green_flags);
    green_flags is None in clean mode.
    """
    cdf = np.ascontiguousarray(cdf, dtype=np.float64)
    seeds = np.asarray(seeds, dtype=np.uint64)
    total, n = cdf.shape
    b = seeds.shape[0]
    tokens = np.empty((b, total), dtype=np.int32)
    green = np.empty((b, total), dtype=np.uint8) if watermark else None
    top = n - 1
    rows_per = _chunk_rows(vocab)
    with np.errstate(over="ignore"):
        for lo in range(0, b, rows_per):
            hi = min(lo + rows_per, b)
            nb = hi - lo
            states = seeds[lo:hi].copy()
            rows = np.arange(nb)
            unit_seeds = np.full(nb, np.uint64(seed0), dtype=np.uint64)
            pos = 0
            for t in unit_sizes:
                t = int(t)
                if watermark:
                    mask = _membership(partition_green(unit_seeds, vocab, n_green), vocab)
                for _ in range(t):
                    c = cdf[pos]
                    if not watermark:
                        u = _draw_unit(states)
                        tokens[lo:hi, pos] = np.minimum(
                            np.searchsorted(c, u, side="right"), top
                        )
                    else:
                        chosen = np.zeros(nb, dtype=np.intp)
                        undecided = np.ones(nb, dtype=bool)
                        while undecided.any():
                            idx = np.flatnonzero(undecided)
                            u = _draw_unit(states, idx)
                            cand = np.minimum(np.searchsorted(c, u, side="right"), top)
                            isg = mask[idx, cand]
                            acc = idx[isg]
                            chosen[acc] = cand[isg]
                            undecided[acc] = False
                            red_idx = idx[~isg]
                            if red_idx.size:
                                if red_accept >= 1.0:
                                    chosen[red_idx] = cand[~isg]
                                    undecided[red_idx] = False
                                else:
                                    v = _draw_unit(states, red_idx)
                                    keep = v < red_accept
                                    kept = red_idx[keep]
                                    chosen[kept] = cand[~isg][keep]
                                    undecided[kept] = False
                        tokens[lo:hi, pos] = chosen
                        green[lo:hi, pos] = mask[rows, chosen]
                    pos += 1
                if watermark:
                    unit_seeds = hash_units(tokens[lo:hi, pos - t : pos])
    return tokens, green
