"""Deterministic hash -> PRG -> vocabulary partition pipeline.

The embedder and the detector call exactly the same functions here, which is
what makes detection possible without the generating model: identical
previous-unit tokens always reproduce the identical green/red partition, on
any platform.

Pinned algorithms (recorded in SeedChain so keyed variants can slot in
later): FNV-1a (64-bit) over the little-endian u32 encoding of the unit's
token ids for hashing, SplitMix64 driving an ascending Fisher-Yates shuffle
for partitioning. The green list is the first round(gamma*|V|) ids of the
shuffled vocabulary; rounding is half-to-even.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .core import Codebook, GreenMask

HASH_ALGORITHM = "fnv1a64"
PRG_ALGORITHM = "splitmix64"


@dataclass(frozen=True)
class SeedChain:
    """Configuration of the seeding pipeline (only the pinned pair for now)."""

    hash_algorithm: str = HASH_ALGORITHM
    prg_algorithm: str = PRG_ALGORITHM

    def __post_init__(self):
        if self.hash_algorithm != HASH_ALGORITHM:
            raise ValueError(f"unsupported hash algorithm: {self.hash_algorithm}")
        if self.prg_algorithm != PRG_ALGORITHM:
            raise ValueError(f"unsupported prg algorithm: {self.prg_algorithm}")


DEFAULT_CHAIN = SeedChain()


def hash_unit(unit) -> int:
    """64-bit seed from a non-empty list of token ids (order-sensitive)."""
    ids = np.atleast_1d(np.asarray(unit, dtype=np.uint32))
    if ids.size == 0:
        raise ValueError("hash_unit needs a non-empty unit")
    return int(kernels.hash_units(ids[None, :])[0])


def hash_sentinel(initial_seed: int) -> int:
    """Seed for the first unit: hash of the 8-byte encoding of initial_seed."""
    return kernels.fnv1a_u64(initial_seed)


def green_list_size(codebook: Codebook, gamma: float) -> int:
    """round(gamma * |V|), half-to-even; both lists must stay non-empty."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0,1), got {gamma}")
    g = round(gamma * codebook.size)
    if not 1 <= g <= codebook.size - 1:
        raise ValueError(
            f"gamma={gamma} leaves an empty list for vocab {codebook.size}"
        )
    return g


def partition(codebook: Codebook, seed: int, gamma: float) -> GreenMask:
    """Split the vocabulary into green/red lists for one 64-bit seed."""
    g = green_list_size(codebook, gamma)
    ids = kernels.partition_green(
        np.asarray([seed], dtype=np.uint64), codebook.size, g
    )[0]
    return GreenMask.from_ids(ids, codebook.size)


def partition_many(codebook: Codebook, seeds: np.ndarray, gamma: float) -> np.ndarray:
    """Green id lists for a batch of seeds, shape (len(seeds), green_size)."""
    g = green_list_size(codebook, gamma)
    return kernels.partition_green(
        np.asarray(seeds, dtype=np.uint64), codebook.size, g
    )
