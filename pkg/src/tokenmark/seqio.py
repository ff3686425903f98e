"""Token-sequence file formats.

Text form:
    tokenmark-v1 <kind> <K> <t_1,...,t_K>
    <unit 1: space-separated decimal token ids>
    ...
    <unit K>

Binary form: magic ``TMK1``, then little-endian u32 fields
(kind, K, t_1..t_K), then all token ids as little-endian u32 in unit order.
kind is 0 for MultiScale, 1 for PerToken.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import ScheduleKind, TokenSequence, UnitSchedule

TEXT_HEADER = "tokenmark-v1"
BINARY_MAGIC = b"TMK1"

_KIND_CODE = {ScheduleKind.MULTI_SCALE: 0, ScheduleKind.PER_TOKEN: 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}
_NAME_KIND = {k.value: k for k in ScheduleKind}


class SequenceFormatError(ValueError):
    """Raised for malformed token-sequence files."""


def dump_text(seq: TokenSequence) -> str:
    sched = seq.schedule
    header = "{} {} {} {}".format(
        TEXT_HEADER,
        sched.kind.value,
        sched.n_units,
        ",".join(str(t) for t in sched.unit_sizes),
    )
    lines = [header]
    for unit in seq.units():
        lines.append(" ".join(str(int(t)) for t in unit))
    return "\n".join(lines) + "\n"


def load_text(text: str) -> TokenSequence:
    lines = text.splitlines()
    if not lines:
        raise SequenceFormatError("line 1: empty input, expected header")
    parts = lines[0].split()
    if len(parts) != 4 or parts[0] != TEXT_HEADER:
        raise SequenceFormatError(
            f"line 1: malformed header {lines[0]!r}, expected "
            f"'{TEXT_HEADER} <kind> <K> <t_1,...,t_K>'"
        )
    if parts[1] not in _NAME_KIND:
        raise SequenceFormatError(f"line 1: unknown schedule kind {parts[1]!r}")
    kind = _NAME_KIND[parts[1]]
    try:
        n_units = int(parts[2])
        sizes = tuple(int(s) for s in parts[3].split(","))
    except ValueError as exc:
        raise SequenceFormatError(f"line 1: {exc}") from None
    if n_units != len(sizes):
        raise SequenceFormatError(
            f"line 1: K={n_units} but {len(sizes)} unit sizes listed"
        )
    schedule = UnitSchedule(kind=kind, unit_sizes=sizes)
    body = lines[1:]
    if len(body) != n_units:
        raise SequenceFormatError(
            f"expected {n_units} unit lines after the header, found {len(body)}"
        )
    flat = np.empty(schedule.total_tokens, dtype=np.int32)
    pos = 0
    for i, line in enumerate(body):
        try:
            ids = [int(s) for s in line.split()]
        except ValueError as exc:
            raise SequenceFormatError(f"line {i + 2}: {exc}") from None
        if len(ids) != sizes[i]:
            raise SequenceFormatError(
                f"line {i + 2}: unit {i + 1} has {len(ids)} ids, expected {sizes[i]}"
            )
        if any(t < 0 for t in ids):
            raise SequenceFormatError(f"line {i + 2}: negative token id")
        flat[pos : pos + len(ids)] = ids
        pos += len(ids)
    return TokenSequence(tokens=flat, schedule=schedule)


def dump_binary(seq: TokenSequence) -> bytes:
    sched = seq.schedule
    head = np.empty(2 + sched.n_units, dtype="<u4")
    head[0] = _KIND_CODE[sched.kind]
    head[1] = sched.n_units
    head[2:] = sched.unit_sizes
    ids = seq.tokens.astype("<u4")
    return BINARY_MAGIC + head.tobytes() + ids.tobytes()


def load_binary(data: bytes) -> TokenSequence:
    if data[:4] != BINARY_MAGIC:
        raise SequenceFormatError("bad magic, expected TMK1")
    words = np.frombuffer(data[4:], dtype="<u4")
    if words.size < 2:
        raise SequenceFormatError("truncated header")
    code, n_units = int(words[0]), int(words[1])
    if code not in _CODE_KIND:
        raise SequenceFormatError(f"unknown schedule kind code {code}")
    if words.size < 2 + n_units:
        raise SequenceFormatError("truncated unit-size table")
    sizes = tuple(int(t) for t in words[2 : 2 + n_units])
    schedule = UnitSchedule(kind=_CODE_KIND[code], unit_sizes=sizes)
    ids = words[2 + n_units :]
    if ids.size != schedule.total_tokens:
        raise SequenceFormatError(
            f"expected {schedule.total_tokens} token ids, found {ids.size}"
        )
    return TokenSequence(tokens=ids.astype(np.int32), schedule=schedule)


def write_sequence(seq: TokenSequence, path: str | Path, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        path.write_bytes(dump_binary(seq))
    else:
        path.write_text(dump_text(seq))


def read_sequence(path: str | Path) -> TokenSequence:
    """Load a token file in either format, sniffing by magic/header."""
    raw = Path(path).read_bytes()
    if raw[:4] == BINARY_MAGIC:
        return load_binary(raw)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        raise SequenceFormatError("not a TMK1 binary and not valid UTF-8 text") from None
    return load_text(text)
