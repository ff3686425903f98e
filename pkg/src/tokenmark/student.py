"""Smoothed n-gram student model: the trainable stand-in for a second
generative model fit on someone else's outputs.

This module deliberately knows nothing about watermarking. It counts
context -> next-token transitions over training sequences and samples from
the additively smoothed conditionals. Any watermark signal that shows up
in its output got there through the training data alone.

Contexts are position-classed: (unit index, previous `order` token ids),
with the previous tokens taken in generation order across unit boundaries
and -1 padding before the sequence start.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ._kernels.bits import Sm64Stream, sm64_at
from .core import ScheduleKind, TokenSequence, UnitSchedule

STUDENT_MAGIC = b"TMS1"


@dataclass
class _ContextDist:
    ids: np.ndarray  # int32, ascending
    cum: np.ndarray  # int64 cumulative counts over ids
    total: int


class StudentModel:
    """Additively smoothed n-gram over token sequences.

    order 0 conditions on the position class alone; order k adds the k
    previous tokens. sampling probability of token t given context c is
    (count(c,t) + smoothing) / (total(c) + smoothing * vocab).
    """

    def __init__(
        self,
        order: int,
        smoothing: float,
        schedule: UnitSchedule,
        vocab_size: int,
    ):
        if order < 0:
            raise ValueError(f"order must be >= 0, got {order}")
        if smoothing <= 0:
            raise ValueError(f"smoothing must be positive, got {smoothing}")
        self.order = order
        self.smoothing = float(smoothing)
        self.schedule = schedule
        self.vocab_size = int(vocab_size)
        self._raw: dict[tuple, dict[int, int]] = {}
        self._dists: dict[tuple, _ContextDist] | None = None
        self._unit_of_pos = np.repeat(
            np.arange(schedule.n_units, dtype=np.int64), schedule.sizes_array()
        )

    def _context_at(self, tokens: np.ndarray, pos: int) -> tuple:
        lo = pos - self.order
        prev = [-1] * max(0, -lo) + [int(t) for t in tokens[max(0, lo) : pos]]
        return (int(self._unit_of_pos[pos]), *prev)

    def add_sequence(self, tokens: np.ndarray) -> None:
        if self._dists is not None:
            raise RuntimeError("model already finalized")
        total = self.schedule.total_tokens
        if tokens.shape[0] != total:
            raise ValueError("sequence does not match the training schedule")
        for pos in range(total):
            ctx = self._context_at(tokens, pos)
            slot = self._raw.setdefault(ctx, {})
            tok = int(tokens[pos])
            slot[tok] = slot.get(tok, 0) + 1

    def _finalize(self) -> dict[tuple, _ContextDist]:
        if self._dists is None:
            dists = {}
            for ctx, slot in self._raw.items():
                ids = np.fromiter(sorted(slot), dtype=np.int32, count=len(slot))
                counts = np.array([slot[int(t)] for t in ids], dtype=np.int64)
                dists[ctx] = _ContextDist(
                    ids=ids, cum=np.cumsum(counts), total=int(counts.sum())
                )
            self._dists = dists
        return self._dists

    @property
    def n_contexts(self) -> int:
        return len(self._raw)

    def sample_token(self, ctx: tuple, stream: Sm64Stream) -> int:
        """One draw from the smoothed conditional.

        Decomposed as a mixture: with weight total/(total + smoothing*vocab)
        draw from the empirical counts, otherwise uniformly from the
        vocabulary. Equals the smoothed distribution exactly and costs
        O(support) instead of O(vocab).
        """
        dists = self._finalize()
        d = dists.get(ctx)
        total = d.total if d is not None else 0
        memorized_w = total / (total + self.smoothing * self.vocab_size)
        u = stream.next_unit()
        v = stream.next_unit()
        if u < memorized_w:
            idx = int(np.searchsorted(d.cum, v * total, side="right"))
            return int(d.ids[min(idx, d.ids.shape[0] - 1)])
        return min(int(v * self.vocab_size), self.vocab_size - 1)

    def sample_sequence(self, seed: int) -> TokenSequence:
        total = self.schedule.total_tokens
        out = np.empty(total, dtype=np.int32)
        stream = Sm64Stream(seed)
        for pos in range(total):
            out[pos] = self.sample_token(self._context_at(out, pos), stream)
        return TokenSequence(tokens=out, schedule=self.schedule)


def train_student(corpus, order: int, smoothing: float) -> StudentModel:
    """Fit a student on a corpus of TokenSequence with one shared schedule."""
    corpus = list(corpus)
    if not corpus:
        raise ValueError("training corpus is empty")
    schedule = corpus[0].schedule
    if any(seq.schedule != schedule for seq in corpus):
        raise ValueError("training corpus mixes schedules")
    vocab = int(max(int(seq.tokens.max()) for seq in corpus)) + 1
    return train_student_matrix(
        np.stack([seq.tokens for seq in corpus]), schedule, order, smoothing, vocab
    )


def train_student_matrix(
    tokens: np.ndarray,
    schedule: UnitSchedule,
    order: int,
    smoothing: float,
    vocab_size: int,
) -> StudentModel:
    model = StudentModel(order, smoothing, schedule, vocab_size)
    tokens = np.ascontiguousarray(tokens, dtype=np.int32)
    for row in tokens:
        model.add_sequence(row)
    return model


def generate_student(model: StudentModel, n: int, seed: int) -> list[TokenSequence]:
    """n sequences sampled from the student; per-sequence seeds fan out of `seed`."""
    return [model.sample_sequence(sm64_at(seed, i)) for i in range(n)]


def generate_student_matrix(model: StudentModel, n: int, seed: int) -> np.ndarray:
    out = np.empty((n, model.schedule.total_tokens), dtype=np.int32)
    for i in range(n):
        out[i] = model.sample_sequence(sm64_at(seed, i)).tokens
    return out


_KIND_CODE = {ScheduleKind.MULTI_SCALE: 0, ScheduleKind.PER_TOKEN: 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


def save_student(model: StudentModel, path) -> None:
    """Serialize: magic TMS1, order, smoothing, schedule, vocab, then the
    context/count records sorted by context key."""
    sched = model.schedule
    parts = [STUDENT_MAGIC]
    parts.append(struct.pack("<Id", model.order, model.smoothing))
    parts.append(
        struct.pack(
            f"<II{sched.n_units}I",
            _KIND_CODE[sched.kind],
            sched.n_units,
            *sched.unit_sizes,
        )
    )
    parts.append(struct.pack("<IQ", model.vocab_size, len(model._raw)))
    for ctx in sorted(model._raw):
        slot = model._raw[ctx]
        parts.append(struct.pack(f"<I{model.order}i", ctx[0], *ctx[1:]))
        parts.append(struct.pack("<I", len(slot)))
        for tok in sorted(slot):
            parts.append(struct.pack("<IQ", tok, slot[tok]))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_student(path) -> StudentModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != STUDENT_MAGIC:
        raise ValueError("bad magic, expected TMS1")
    off = 4
    order, smoothing = struct.unpack_from("<Id", data, off)
    off += struct.calcsize("<Id")
    code, k = struct.unpack_from("<II", data, off)
    off += 8
    sizes = struct.unpack_from(f"<{k}I", data, off)
    off += 4 * k
    vocab, n_ctx = struct.unpack_from("<IQ", data, off)
    off += struct.calcsize("<IQ")
    schedule = UnitSchedule(kind=_CODE_KIND[code], unit_sizes=tuple(int(s) for s in sizes))
    model = StudentModel(order, smoothing, schedule, vocab)
    for _ in range(n_ctx):
        head = struct.unpack_from(f"<I{order}i", data, off)
        off += 4 + 4 * order
        ctx = (int(head[0]), *(int(x) for x in head[1:]))
        (n_entries,) = struct.unpack_from("<I", data, off)
        off += 4
        slot = {}
        for _ in range(n_entries):
            tok, count = struct.unpack_from("<IQ", data, off)
            off += struct.calcsize("<IQ")
            slot[int(tok)] = int(count)
        model._raw[ctx] = slot
    return model
