"""Scalar integer primitives shared by both kernel backends.

Everything here is pinned: SplitMix64 for pseudo-randomness, FNV-1a (64-bit)
for unit hashing. Both are tiny, fully specified algorithms that reproduce
bit-for-bit on any platform. The vectorized batch versions live in the
backend modules; these scalar forms are the reference semantics.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF

SM64_GOLDEN = 0x9E3779B97F4A7C15
SM64_MIX1 = 0xBF58476D1CE4E5B9
SM64_MIX2 = 0x94D049BB133111EB

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3

# (x >> 11) spans [0, 2^53); scaling by 2^-53 is exact in float64.
_TO_UNIT = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 output function (Stafford mix13)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * SM64_MIX1) & MASK64
    z = ((z ^ (z >> 27)) * SM64_MIX2) & MASK64
    return z ^ (z >> 31)


def sm64_at(seed: int, index: int) -> int:
    """The index-th output of the SplitMix64 stream seeded with `seed`.

    SplitMix64 is counter-based, so stream outputs are random-access:
    output_k = mix64(seed + (k+1) * golden). Used for seed fan-out, where
    adding more consumers must never perturb existing ones.
    """
    return mix64((seed + (index + 1) * SM64_GOLDEN) & MASK64)


def to_unit(x: int) -> float:
    """Map a 64-bit word to a double in [0, 1)."""
    return (x >> 11) * _TO_UNIT


def to_open_unit(x: int) -> float:
    """Map a 64-bit word to a double in (0, 1), endpoints excluded."""
    return ((x >> 11) + 0.5) * _TO_UNIT


def mix64_array(z: np.ndarray) -> np.ndarray:
    """Vectorized mix64 over a uint64 array."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(SM64_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(SM64_MIX2)
        return z ^ (z >> np.uint64(31))


def sm64_fill(seed: int, n: int, start: int = 0) -> np.ndarray:
    """Outputs start..start+n-1 of the SplitMix64 stream, as a uint64 array."""
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return mix64_array(np.uint64(seed & MASK64) + idx * np.uint64(SM64_GOLDEN))


def to_open_unit_array(x: np.ndarray) -> np.ndarray:
    """Map uint64 words to doubles in (0, 1), endpoints excluded."""
    return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * _TO_UNIT


class Sm64Stream:
    """Stateful SplitMix64 stream: the artifact's only randomness source."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + SM64_GOLDEN) & MASK64
        return mix64(self.state)

    def next_unit(self) -> float:
        return to_unit(self.next_u64())


def fnv1a_bytes(data: bytes) -> int:
    """FNV-1a over raw bytes, 64-bit."""
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def fnv1a_tokens(token_ids) -> int:
    """FNV-1a over the little-endian u32 encoding of the ids, in order."""
    h = FNV_OFFSET
    for t in token_ids:
        t = int(t)
        for shift in (0, 8, 16, 24):
            h = ((h ^ ((t >> shift) & 0xFF)) * FNV_PRIME) & MASK64
    return h


def fnv1a_u64(value: int) -> int:
    """FNV-1a over the 8-byte little-endian encoding of a 64-bit value."""
    return fnv1a_bytes(int(value).to_bytes(8, "little"))
