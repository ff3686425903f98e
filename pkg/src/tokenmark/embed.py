"""Watermarked generation: bias green logits, softmax, sample, advance units.

The unit loop is: hash the previous unit (a fixed sentinel before the first),
partition the vocabulary from that seed, then sample each token of the unit
from the delta-biased softmax of the logit source's output.

Sampling from the biased distribution is implemented by exact rejection
against the clean distribution: draw a candidate by inverse CDF; keep it if
green; if red, keep it with probability exp(-delta). The accepted token is
distributed exactly as the biased softmax, and the kernels never have to
accumulate floats, which keeps compiled and pure backends bit-identical.
With delta=0 no rejection draw is consumed, so the watermarked path reduces
to the clean path token for token.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtri

from . import _kernels as kernels
from ._kernels.bits import Sm64Stream, sm64_at, sm64_fill, to_open_unit_array
from .core import Codebook, GreenMask, TokenSequence, UnitSchedule, WatermarkParams
from .detect import z_statistic
from .seeding import green_list_size, hash_sentinel, hash_unit


class LogitSource:
    """Provider of next-token logits.

    Implementations map (unit index, position within unit, tokens sampled so
    far) to a logit vector of length vocab_size. Must be safe for concurrent
    use across sequences.
    """

    vocab_size: int

    def logits(self, unit_index: int, pos_in_unit: int, context: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @property
    def context_sensitive(self) -> bool:
        return True


class SyntheticModel(LogitSource):
    """Deterministic stand-in for a real autoregressive network.

    Logits at each position are independent standard normals scaled by
    1/temperature, keyed by (model_seed, global position) and, when
    context_sensitivity is on, additionally by the previous sampled token
    (Markov-style). Temperature divides the normals, so values above 1
    flatten the distribution and values below 1 sharpen it.
    """

    def __init__(
        self,
        model_seed: int,
        vocab_size: int = 4096,
        temperature: float = 1.0,
        context_sensitivity: bool = False,
    ):
        if temperature <= 0:
            raise ValueError(f"temperature must be positive, got {temperature}")
        self.model_seed = int(model_seed)
        self.vocab_size = int(vocab_size)
        self.temperature = float(temperature)
        self.context_sensitivity = bool(context_sensitivity)
        self._cdf_cache: dict[int, np.ndarray] = {}

    @property
    def context_sensitive(self) -> bool:
        return self.context_sensitivity

    def _logits_for_key(self, key: int) -> np.ndarray:
        u = to_open_unit_array(sm64_fill(key, self.vocab_size))
        return ndtri(u) / self.temperature

    def logits(self, unit_index: int, pos_in_unit: int, context: np.ndarray) -> np.ndarray:
        key = sm64_at(self.model_seed, len(context))
        if self.context_sensitivity:
            prev = int(context[-1]) if len(context) else -1
            key = sm64_at(key, prev + 1)
        return self._logits_for_key(key)

    def clean_cdf_table(self, total_tokens: int) -> np.ndarray:
        """Per-position cumulative clean distributions, shape (T, vocab).

        Only defined for context-insensitive models, where position alone
        determines the distribution. Cached per length; building the same
        table twice yields identical arrays, so concurrent builds are safe.
        """
        if self.context_sensitivity:
            raise ValueError("CDF table requires a context-insensitive model")
        cached = self._cdf_cache.get(total_tokens)
        if cached is not None:
            return cached
        table = np.empty((total_tokens, self.vocab_size), dtype=np.float64)
        for pos in range(total_tokens):
            key = sm64_at(self.model_seed, pos)
            table[pos] = np.cumsum(softmax(self._logits_for_key(key)))
        table.setflags(write=False)
        self._cdf_cache[total_tokens] = table
        return table


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max subtraction before exponentiation)."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def bias_logits(logits: np.ndarray, mask: GreenMask, delta: float) -> np.ndarray:
    """Add delta to every green-list logit, leave red logits untouched."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (mask.vocab_size,):
        raise ValueError(
            f"logit vector length {logits.shape} does not match vocab {mask.vocab_size}"
        )
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    return logits + delta * mask.membership


def biased_probabilities(logits: np.ndarray, mask: GreenMask, delta: float) -> np.ndarray:
    """The sampling distribution of the watermarked path, as probabilities."""
    return softmax(bias_logits(logits, mask, delta))


def sample(probs: np.ndarray, rng: Sm64Stream) -> int:
    """Inverse-CDF sample: one PRG draw against the cumulative distribution."""
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs)
    u = rng.next_unit()
    return int(min(np.searchsorted(cdf, u, side="right"), probs.shape[0] - 1))


def _sample_one(cdf: np.ndarray, stream: Sm64Stream, member, red_accept: float) -> int:
    """One token from the biased distribution; member=None means clean."""
    top = cdf.shape[0] - 1
    while True:
        u = stream.next_unit()
        cand = int(min(np.searchsorted(cdf, u, side="right"), top))
        if member is None or member[cand]:
            return cand
        if red_accept >= 1.0:
            return cand
        if stream.next_unit() < red_accept:
            return cand


def _generate(
    source: LogitSource,
    schedule: UnitSchedule,
    codebook: Codebook,
    params: WatermarkParams | None,
    gen_seed: int,
) -> TokenSequence:
    if source.vocab_size != codebook.size:
        raise ValueError(
            f"logit source vocab {source.vocab_size} != codebook {codebook.size}"
        )
    watermark = params is not None
    total = schedule.total_tokens
    tokens = np.empty(total, dtype=np.int32)
    green = np.empty(total, dtype=bool) if watermark else None
    stream = Sm64Stream(gen_seed)
    if watermark:
        n_green = green_list_size(codebook, params.gamma)
        red_accept = math.exp(-params.delta)
        seed = hash_sentinel(params.initial_seed)
    pos = 0
    for i, t in enumerate(schedule.unit_sizes):
        member = None
        if watermark:
            ids = kernels.partition_green(
                np.asarray([seed], dtype=np.uint64), codebook.size, n_green
            )[0]
            member = np.zeros(codebook.size, dtype=bool)
            member[ids] = True
        for j in range(t):
            logits = np.asarray(
                source.logits(i, j, tokens[:pos]), dtype=np.float64
            )
            if logits.shape != (codebook.size,):
                raise ValueError("logit source returned a wrong-length vector")
            if not np.all(np.isfinite(logits)):
                raise ValueError("logit source returned non-finite values")
            cdf = np.cumsum(softmax(logits))
            if watermark:
                tok = _sample_one(cdf, stream, member, red_accept)
                green[pos] = member[tok]
            else:
                tok = _sample_one(cdf, stream, None, 1.0)
            tokens[pos] = tok
            pos += 1
        if watermark:
            seed = hash_unit(tokens[pos - t : pos])
    return TokenSequence(tokens=tokens, schedule=schedule, gen_green=green)


def generate_watermarked(
    source: LogitSource,
    schedule: UnitSchedule,
    codebook: Codebook,
    params: WatermarkParams,
    gen_seed: int,
) -> TokenSequence:
    """One watermarked sequence; records per-token green flags as sampled."""
    return _generate(source, schedule, codebook, params, gen_seed)


def generate_clean(
    source: LogitSource,
    schedule: UnitSchedule,
    codebook: Codebook,
    gen_seed: int,
) -> TokenSequence:
    """One clean sequence: no partitions, no bias, one draw per token."""
    return _generate(source, schedule, codebook, None, gen_seed)


def generate_batch(
    model: SyntheticModel,
    schedule: UnitSchedule,
    codebook: Codebook,
    gen_seeds: np.ndarray,
    params: WatermarkParams | None = None,
):
    """Fast batch generation for context-insensitive synthetic models.

    Returns (tokens, green_flags) with shapes (B, T); green_flags is None
    for clean batches (params=None). Row r equals
    generate_watermarked/generate_clean with gen_seed=gen_seeds[r].
    """
    if model.vocab_size != codebook.size:
        raise ValueError("model vocab does not match codebook")
    cdf = model.clean_cdf_table(schedule.total_tokens)
    sizes = schedule.sizes_array()
    seeds = np.asarray(gen_seeds, dtype=np.uint64)
    if params is None:
        tokens, _ = kernels.sample_sequences(
            cdf, sizes, codebook.size, 0, 0, 1.0, seeds, False
        )
        return tokens, None
    n_green = green_list_size(codebook, params.gamma)
    tokens, green = kernels.sample_sequences(
        cdf,
        sizes,
        codebook.size,
        n_green,
        hash_sentinel(params.initial_seed),
        math.exp(-params.delta),
        seeds,
        True,
    )
    return tokens, green.astype(bool)


def batch_seeds(master_seed: int, n: int, start: int = 0) -> np.ndarray:
    """Per-sequence generation seeds fanned out from one master seed.

    Counter-based, so extending a batch never changes earlier sequences.
    """
    return sm64_fill(master_seed, n, start)


def generation_time_z(seq: TokenSequence, params: WatermarkParams) -> float:
    """z-statistic over the green flags recorded while embedding."""
    if seq.gen_green is None:
        raise ValueError("sequence has no recorded generation-time colors")
    return z_statistic(int(seq.gen_green.sum()), seq.tokens.shape[0], params.gamma)
