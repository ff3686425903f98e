"""Monte-Carlo calibration, distribution summaries, and ROC/TPR evaluation.

The drivers here generate clean or watermarked batches with per-trial seeds
fanned out from one master seed, score them, and summarize. Trial blocks can
run on a thread pool; per-trial seeding plus order-preserving reassembly
makes results independent of the thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import Codebook, UnitSchedule, WatermarkParams
from .detect import normal_sf, z_values_batch
from .embed import SyntheticModel, batch_seeds, generate_batch

_BLOCK = 4096


@dataclass(frozen=True)
class Summary:
    """Moments and tail quantiles of a z-value sample."""

    n: int
    mean: float
    variance: float
    p50: float
    p90: float
    p99: float
    p999: float
    min: float
    max: float

    @staticmethod
    def from_values(values: np.ndarray) -> "Summary":
        v = np.asarray(values, dtype=np.float64)
        if v.size == 0:
            raise ValueError("cannot summarize an empty sample")
        q = np.quantile(v, [0.5, 0.9, 0.99, 0.999])
        return Summary(
            n=int(v.size),
            mean=float(v.mean()),
            variance=float(v.var()),
            p50=float(q[0]),
            p90=float(q[1]),
            p99=float(q[2]),
            p999=float(q[3]),
            min=float(v.min()),
            max=float(v.max()),
        )

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "mean": self.mean,
            "variance": self.variance,
            "p50": self.p50,
            "p90": self.p90,
            "p99": self.p99,
            "p999": self.p999,
            "min": self.min,
            "max": self.max,
        }


def _run_blocks(fn, n: int, threads: int) -> np.ndarray:
    """Run fn(start, count) over blocks of [0, n), concatenated in order."""
    blocks = [(s, min(_BLOCK, n - s)) for s in range(0, n, _BLOCK)]
    if threads <= 1 or len(blocks) == 1:
        parts = [fn(s, c) for s, c in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: fn(*b), blocks))
    return np.concatenate(parts)


def clean_z_sample(
    n: int,
    model: SyntheticModel,
    schedule: UnitSchedule,
    codebook: Codebook,
    params: WatermarkParams,
    master_seed: int,
    threads: int = 1,
) -> np.ndarray:
    """z-values of n freshly generated clean sequences."""

    def block(start, count):
        seeds = batch_seeds(master_seed, count, start)
        tokens, _ = generate_batch(model, schedule, codebook, seeds)
        return z_values_batch(tokens, schedule, codebook, params)

    return _run_blocks(block, n, threads)


def watermarked_z_sample(
    n: int,
    model: SyntheticModel,
    schedule: UnitSchedule,
    codebook: Codebook,
    params: WatermarkParams,
    master_seed: int,
    threads: int = 1,
    channel_apply=None,
) -> np.ndarray:
    """z-values of n watermarked sequences, optionally pushed through a channel.

    channel_apply, when given, maps (tokens_matrix, block_start) to the
    corrupted matrix; block_start lets callers keep per-trial channel seeds
    aligned with trial indices.
    """

    def block(start, count):
        seeds = batch_seeds(master_seed, count, start)
        tokens, _ = generate_batch(model, schedule, codebook, seeds, params)
        if channel_apply is not None:
            tokens = channel_apply(tokens, start)
        return z_values_batch(tokens, schedule, codebook, params)

    return _run_blocks(block, n, threads)


def calibrate_fpr(
    n_trials: int,
    params: WatermarkParams,
    schedule: UnitSchedule,
    codebook: Codebook,
    model: SyntheticModel,
    master_seed: int,
    threads: int = 1,
):
    """Clean-sequence calibration: returns (Summary, empirical FPR at tau, z).

    The empirical FPR is the fraction of clean sequences whose z exceeds
    params.tau, the rate of falsely flagged watermarks.
    """
    if n_trials < 1000:
        raise ValueError("calibration needs at least 1000 trials")
    z = clean_z_sample(n_trials, model, schedule, codebook, params, master_seed, threads)
    return Summary.from_values(z), float(np.mean(z > params.tau)), z


def roc(watermarked_z, clean_z):
    """Empirical ROC points (fpr, tpr), threshold swept over the pooled sample.

    Points are ordered by increasing fpr and include (0,0) and (1,1).
    """
    w = np.sort(np.asarray(watermarked_z, dtype=np.float64))
    c = np.sort(np.asarray(clean_z, dtype=np.float64))
    if w.size == 0 or c.size == 0:
        raise ValueError("both score samples must be non-empty")
    thresholds = np.unique(np.concatenate([w, c]))[::-1]
    points = [(0.0, 0.0)]
    for t in thresholds:
        fpr = float(np.mean(c >= t))
        tpr = float(np.mean(w >= t))
        points.append((fpr, tpr))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


def roc_auc(points) -> float:
    pts = sorted(points)
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    return float(np.trapezoid(ys, xs))


def binomial_tail_log(green_count: int, total: int, gamma: float) -> float:
    """Natural log of P(Y >= green_count) for Y ~ Binomial(total, gamma).

    Stable log-space summation over the upper tail; exact to float precision
    even where the probability itself underflows (e.g. gamma^T for an
    all-green sequence).
    """
    if total < 1:
        raise ValueError(f"total must be >= 1, got {total}")
    if not 0 <= green_count <= total:
        raise ValueError(f"green_count {green_count} outside [0, {total}]")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must be in (0,1), got {gamma}")
    if green_count == 0:
        return 0.0
    lg, l1g = math.log(gamma), math.log1p(-gamma)
    lt = math.lgamma(total + 1)
    terms = [
        lt
        - math.lgamma(k + 1)
        - math.lgamma(total - k + 1)
        + k * lg
        + (total - k) * l1g
        for k in range(green_count, total + 1)
    ]
    peak = max(terms)
    return peak + math.log(math.fsum(math.exp(t - peak) for t in terms))


def binomial_tail_exact(green_count: int, total: int, gamma: float) -> float:
    """Exact one-sided binomial tail P(Y >= green_count); may underflow to 0."""
    log_p = binomial_tail_log(green_count, total, gamma)
    return math.exp(log_p) if log_p > -745.0 else 0.0


def binomial_3sigma(p: float, n: int) -> float:
    """Three-sigma half-width for an empirical frequency at sample size n."""
    return 3.0 * math.sqrt(p * (1.0 - p) / n)


def normal_tail(tau: float) -> float:
    """Expected false-positive probability of the z-test at threshold tau."""
    return normal_sf(tau)
