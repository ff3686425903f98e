"""Core domain types: vocabulary, unit schedules, parameters, token sequences.

Everything here is immutable after construction and safe to share across
threads. Token ids are dense integers 0..vocab_size-1; no embedding vectors
are attached to them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

DEFAULT_VOCAB_SIZE = 4096

# Side lengths of the canonical multi-scale ladder; their squares sum to 680.
VAR_SIDE_LENGTHS = (1, 2, 3, 4, 5, 6, 8, 10, 13, 16)


class ScheduleKind(Enum):
    MULTI_SCALE = "MultiScale"
    PER_TOKEN = "PerToken"


@dataclass(frozen=True)
class Codebook:
    """The token vocabulary: ids are 0..size-1."""

    size: int = DEFAULT_VOCAB_SIZE

    def __post_init__(self):
        if self.size < 2:
            raise ValueError(f"codebook size must be >= 2, got {self.size}")


@dataclass(frozen=True)
class UnitSchedule:
    """Autoregressive unit structure: how many tokens each step emits."""

    kind: ScheduleKind
    unit_sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.unit_sizes) < 1:
            raise ValueError("schedule needs at least one unit")
        if any(t < 1 for t in self.unit_sizes):
            raise ValueError("unit sizes must be positive")
        if self.kind is ScheduleKind.PER_TOKEN and any(t != 1 for t in self.unit_sizes):
            raise ValueError("per-token schedules must have unit size 1 everywhere")

    @property
    def n_units(self) -> int:
        return len(self.unit_sizes)

    @property
    def total_tokens(self) -> int:
        return sum(self.unit_sizes)

    def sizes_array(self) -> np.ndarray:
        return np.asarray(self.unit_sizes, dtype=np.int64)

    def offsets(self) -> np.ndarray:
        """Start offset of each unit in a flat token array (plus the end)."""
        out = np.zeros(self.n_units + 1, dtype=np.int64)
        np.cumsum(self.unit_sizes, out=out[1:])
        return out


def make_var_schedule() -> UnitSchedule:
    """The canonical multi-scale schedule: 10 square resolutions, 680 tokens."""
    return UnitSchedule(
        kind=ScheduleKind.MULTI_SCALE,
        unit_sizes=tuple(s * s for s in VAR_SIDE_LENGTHS),
    )


def make_rar_schedule(n_tokens: int) -> UnitSchedule:
    """A per-token schedule: n_tokens units of one token each."""
    if n_tokens < 1:
        raise ValueError(f"n_tokens must be >= 1, got {n_tokens}")
    return UnitSchedule(kind=ScheduleKind.PER_TOKEN, unit_sizes=(1,) * n_tokens)


@dataclass(frozen=True)
class WatermarkParams:
    """Watermark hyperparameters.

    gamma: green-list fraction of the vocabulary, in (0,1).
    delta: logit bias added to green-list tokens, >= 0.
    tau: detection threshold on the z-statistic.
    initial_seed: the fixed value hashed in place of a unit before the first.
    """

    gamma: float = 0.25
    delta: float = 2.0
    tau: float = 4.0
    initial_seed: int = 42

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0,1), got {self.gamma}")
        if self.delta < 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not 0 <= self.initial_seed < 2**64:
            raise ValueError("initial_seed must fit in 64 bits")

    def green_size(self, codebook: Codebook) -> int:
        """Green-list size: gamma * |V| rounded half-to-even.

        Both lists must be non-empty, so the result has to land in
        [1, |V| - 1].
        """
        g = round(self.gamma * codebook.size)
        if not 1 <= g <= codebook.size - 1:
            raise ValueError(
                f"gamma={self.gamma} with vocab {codebook.size} leaves an "
                f"empty green or red list (green size {g})"
            )
        return g


@dataclass(frozen=True)
class GreenMask:
    """Membership bit-set over token ids (True = green)."""

    membership: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.membership, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "membership", m)

    @property
    def vocab_size(self) -> int:
        return self.membership.shape[0]

    @property
    def n_green(self) -> int:
        return int(self.membership.sum())

    def green_ids(self) -> np.ndarray:
        return np.flatnonzero(self.membership)

    @staticmethod
    def from_ids(ids: np.ndarray, vocab_size: int) -> "GreenMask":
        m = np.zeros(vocab_size, dtype=bool)
        m[np.asarray(ids, dtype=np.int64)] = True
        return GreenMask(m)


@dataclass(frozen=True)
class TokenSequence:
    """Tokens of one generated/encoded image, grouped by autoregressive unit.

    tokens: flat int32 array in generation order.
    gen_green: optional per-token flags recorded at embedding time (True if
        the token was on the green list when sampled); None for sequences
        that never saw a partition (clean generations, parsed files).
    """

    tokens: np.ndarray
    schedule: UnitSchedule
    gen_green: np.ndarray | None = field(default=None)

    def __post_init__(self):
        tok = np.ascontiguousarray(self.tokens, dtype=np.int32)
        if tok.ndim != 1:
            raise ValueError("tokens must be a flat array")
        if tok.shape[0] != self.schedule.total_tokens:
            raise ValueError(
                f"token count {tok.shape[0]} does not match schedule "
                f"total {self.schedule.total_tokens}"
            )
        tok.setflags(write=False)
        object.__setattr__(self, "tokens", tok)
        if self.gen_green is not None:
            gg = np.ascontiguousarray(self.gen_green, dtype=bool)
            if gg.shape != tok.shape:
                raise ValueError("gen_green must align with tokens")
            gg.setflags(write=False)
            object.__setattr__(self, "gen_green", gg)

    def validate_ids(self, codebook: Codebook) -> None:
        if self.tokens.size and (
            int(self.tokens.min()) < 0 or int(self.tokens.max()) >= codebook.size
        ):
            raise ValueError("token id out of codebook range")

    def units(self) -> list[np.ndarray]:
        off = self.schedule.offsets()
        return [self.tokens[off[i] : off[i + 1]] for i in range(self.schedule.n_units)]

    def unit(self, i: int) -> np.ndarray:
        off = self.schedule.offsets()
        return self.tokens[off[i] : off[i + 1]]
