import math
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from tokenmark.core import WatermarkParams
from tokenmark.stats import (
    Summary,
    binomial_3sigma,
    binomial_tail_exact,
    binomial_tail_log,
    calibrate_fpr,
    normal_tail,
    roc,
    roc_auc,
)


def tail_oracle(green, total, gamma):
    # brute-force exact rational enumeration, independent of the implementation
    g = Fraction(gamma)
    return sum(comb(total, k) * g**k * (1 - g) ** (total - k) for k in range(green, total + 1))


def test_binomial_tail_small_cases():
    assert binomial_tail_exact(0, 10, 0.25) == 1.0
    expected = tail_oracle(5, 10, Fraction(1, 2))
    assert expected == Fraction(319, 512)
    assert float(expected) == 0.623046875
    assert abs(binomial_tail_exact(5, 10, 0.5) - 0.623046875) < 1e-12


@pytest.mark.parametrize("green,total", [(1, 4), (3, 7), (12, 20), (170, 200)])
def test_binomial_tail_matches_oracle(green, total):
    gamma = 0.25
    ours = binomial_tail_exact(green, total, gamma)
    exact = float(tail_oracle(green, total, Fraction(1, 4)))
    assert abs(ours - exact) < 1e-11 * max(exact, 1e-30)


def test_binomial_tail_all_green_log_form():
    # the probability that a 680-token clean sequence is all green is
    # gamma^T, far below double range; the log form carries it exactly
    log_p = binomial_tail_log(680, 680, 0.25)
    assert abs(log_p - 680 * math.log(0.25)) < 1e-9
    assert binomial_tail_exact(680, 680, 0.25) == 0.0


def test_binomial_tail_domain():
    with pytest.raises(ValueError):
        binomial_tail_log(-1, 10, 0.5)
    with pytest.raises(ValueError):
        binomial_tail_log(11, 10, 0.5)
    with pytest.raises(ValueError):
        binomial_tail_log(1, 10, 0.0)


def test_summary_fields():
    values = np.arange(1000, dtype=np.float64)
    s = Summary.from_values(values)
    assert s.n == 1000
    assert s.mean == pytest.approx(499.5)
    assert s.min == 0.0 and s.max == 999.0
    assert s.p50 <= s.p90 <= s.p99 <= s.p999
    assert s.variance >= 0
    with pytest.raises(ValueError):
        Summary.from_values(np.array([]))


def test_roc_no_signal():
    rng = np.random.default_rng(0)
    points = roc(rng.normal(size=10_000), rng.normal(size=10_000))
    assert abs(roc_auc(points) - 0.5) < 0.02
    fprs = [p[0] for p in points]
    tprs = [p[1] for p in points]
    assert fprs == sorted(fprs)
    assert tprs == sorted(tprs)


def test_roc_separated():
    clean = np.random.default_rng(1).normal(size=500)
    points = roc(clean + 50.0, clean)
    assert roc_auc(points) == 1.0
    assert points[0] == (0.0, 0.0) and points[-1] == (1.0, 1.0)


def test_roc_validation():
    with pytest.raises(ValueError):
        roc([], [1.0])


def test_calibrate_fpr_minimum_scale(model, codebook, params, var_schedule):
    summary, fpr, z = calibrate_fpr(
        2000, params, var_schedule, codebook, model, master_seed=1234
    )
    assert summary.n == 2000
    assert abs(summary.mean) < 3 / math.sqrt(2000)
    assert 0.85 < summary.variance < 1.15
    assert fpr <= 0.005
    assert z.shape == (2000,)
    with pytest.raises(ValueError):
        calibrate_fpr(10, params, var_schedule, codebook, model, master_seed=1)


def test_calibrate_fpr_at_normal_quantile(model, codebook, var_schedule):
    # tau = 2.326 is the 1% point of the null: empirical FPR ~ 1% +- 3 sigma
    params = WatermarkParams(gamma=0.25, delta=2.0, tau=2.326, initial_seed=42)
    _, fpr, _ = calibrate_fpr(
        5000, params, var_schedule, codebook, model, master_seed=777
    )
    assert abs(fpr - 0.01) <= binomial_3sigma(0.01, 5000) + 0.002


def test_calibrate_threads_invariance(model, codebook, params, var_schedule):
    s1, f1, z1 = calibrate_fpr(5000, params, var_schedule, codebook, model, 31, threads=1)
    s4, f4, z4 = calibrate_fpr(5000, params, var_schedule, codebook, model, 31, threads=4)
    assert np.array_equal(z1, z4)
    assert s1 == s4 and f1 == f4


def test_normal_tail_value():
    assert abs(normal_tail(4.0) - 3.167e-5) < 2e-7


def test_binomial_3sigma():
    assert binomial_3sigma(0.25, 10_000) == pytest.approx(
        3 * math.sqrt(0.25 * 0.75 / 10_000)
    )
