"""Kernel backend selection.

The hot loops (seeded partitioning, green counting, biased sampling) exist
twice: a Cython extension (_ckern) and a numpy fallback (pure). Both produce
bit-identical results; the extension is picked when importable. Set
TOKENMARK_BACKEND=pure or TOKENMARK_BACKEND=compiled to force one.
"""

import os

from .bits import (  # noqa: F401
    MASK64,
    Sm64Stream,
    fnv1a_bytes,
    fnv1a_tokens,
    fnv1a_u64,
    mix64,
    sm64_at,
    to_open_unit,
    to_unit,
)

_forced = os.environ.get("TOKENMARK_BACKEND", "").strip().lower()

if _forced in ("pure", "py", "python"):
    from . import pure as _impl
elif _forced in ("compiled", "c", "ext"):
    from . import _ckern as _impl
elif _forced:
    raise ImportError(f"unknown TOKENMARK_BACKEND value: {_forced!r}")
else:
    try:
        from . import _ckern as _impl
    except ImportError:
        from . import pure as _impl

IMPL = _impl.IMPL
hash_units = _impl.hash_units
partition_green = _impl.partition_green
detect_green_counts = _impl.detect_green_counts
sample_sequences = _impl.sample_sequences
