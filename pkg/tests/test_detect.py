import json

import numpy as np
import pytest

from tokenmark.core import Codebook, TokenSequence, WatermarkParams, make_rar_schedule
from tokenmark.detect import (
    detect,
    green_counts_batch,
    normal_sf,
    tpr_at_fpr,
    z_statistic,
    z_values_batch,
)
from tokenmark.embed import batch_seeds, generate_batch, generate_clean, generate_watermarked

# High-precision oracle values (mpmath, 18 significant digits).
Z_ALL_GREEN = 45.1663591625448597
Z_204 = 3.01109061083632398


def test_z_statistic_expectation_case():
    assert z_statistic(170, 680, 0.25) == 0.0


def test_z_statistic_all_green():
    assert abs(z_statistic(680, 680, 0.25) - Z_ALL_GREEN) < 1e-9
    assert abs(z_statistic(680, 680, 0.25) - 45.166) < 1e-3


def test_z_statistic_partial():
    assert abs(z_statistic(204, 680, 0.25) - Z_204) < 1e-9
    assert abs(z_statistic(204, 680, 0.25) - 3.0111) < 1e-3


def test_z_statistic_domain():
    with pytest.raises(ValueError):
        z_statistic(-1, 680, 0.25)
    with pytest.raises(ValueError):
        z_statistic(681, 680, 0.25)
    with pytest.raises(ValueError):
        z_statistic(0, 0, 0.25)
    with pytest.raises(ValueError):
        z_statistic(1, 10, 1.0)


def test_lossless_round_trip(model, codebook, var_schedule):
    # with no channel, the detector recovers the embedder's green total exactly
    params = WatermarkParams(gamma=0.25, delta=6.0, tau=4.0, initial_seed=42)
    for seed in (1, 2, 3, 400):
        seq = generate_watermarked(model, var_schedule, codebook, params, seed)
        report = detect(seq, codebook, params)
        assert report.green_count == int(seq.gen_green.sum())
        assert report.decision
        assert sum(report.per_unit_green) == report.green_count
        assert len(report.per_unit_green) == var_schedule.n_units


def test_report_consistency(model, codebook, params, var_schedule):
    seq = generate_watermarked(model, var_schedule, codebook, params, 9)
    report = detect(seq, codebook, params)
    recomputed = z_statistic(report.green_count, report.total_tokens, report.gamma)
    assert abs(report.z_value - recomputed) < 1e-12
    assert report.decision == (report.z_value > params.tau)
    assert abs(report.p_value - normal_sf(report.z_value)) < 1e-15


def test_detection_deterministic(model, codebook, params, var_schedule):
    seq = generate_watermarked(model, var_schedule, codebook, params, 12)
    a = detect(seq, codebook, params)
    b = detect(seq, codebook, params)
    assert a == b


def test_report_json_keys(model, codebook, params, var_schedule):
    seq = generate_clean(model, var_schedule, codebook, 3)
    blob = json.dumps(detect(seq, codebook, params).to_json())
    data = json.loads(blob)
    assert set(data) == {
        "green_count", "total", "gamma", "z", "p_value", "decision", "per_unit_green",
    }
    assert len(data["per_unit_green"]) == var_schedule.n_units


def test_detect_rejects_out_of_range_ids(params):
    sched = make_rar_schedule(3)
    seq = TokenSequence(tokens=np.array([0, 1, 7]), schedule=sched)
    with pytest.raises(ValueError):
        detect(seq, Codebook(4), params)


def test_all_green_synthetic_detection(codebook):
    # build a 680-token sequence that is green at every position by
    # construction, then check z matches the closed form
    params = WatermarkParams(gamma=0.25, delta=50.0, tau=4.0, initial_seed=42)
    from tokenmark.embed import SyntheticModel

    model = SyntheticModel(17, codebook.size, temperature=1000.0)
    sched = make_rar_schedule(680)
    seq = generate_watermarked(model, sched, codebook, params, 5)
    assert seq.gen_green.all()
    report = detect(seq, codebook, params)
    assert abs(report.z_value - Z_ALL_GREEN) < 1e-9
    assert report.decision


def test_single_corruption_unit_bound(model, codebook, params, var_schedule):
    # flipping one token inside unit i moves unit i's own green count by at
    # most 1 and leaves earlier units untouched; later units may recolor
    seq = generate_watermarked(model, var_schedule, codebook, params, 21)
    base = green_counts_batch(seq.tokens[None, :], var_schedule, codebook, params)[0]
    off = var_schedule.offsets()
    for unit_idx in (2, 5, 9):
        for delta_pos in (0, var_schedule.unit_sizes[unit_idx] - 1):
            pos = int(off[unit_idx]) + delta_pos
            corrupted = seq.tokens.copy()
            corrupted[pos] = (corrupted[pos] + 1) % codebook.size
            counts = green_counts_batch(
                corrupted[None, :], var_schedule, codebook, params
            )[0]
            assert abs(int(counts[unit_idx]) - int(base[unit_idx])) <= 1
            assert np.array_equal(counts[:unit_idx], base[:unit_idx])


def test_clean_false_positive_rate_small(model, codebook, params, var_schedule):
    # small-scale version of the calibration: 2000 clean sequences
    tokens, _ = generate_batch(model, var_schedule, codebook, batch_seeds(606, 2000))
    z = z_values_batch(tokens, var_schedule, codebook, params)
    assert np.mean(z > 4.0) <= 2e-3
    assert abs(z.mean()) < 0.1


def test_tpr_identical_distributions():
    rng = np.random.default_rng(8)
    clean = rng.normal(size=10_000)
    fake = rng.normal(size=10_000)
    tpr = tpr_at_fpr(fake, clean, 0.01)
    assert 0.005 <= tpr <= 0.02


def test_tpr_separated_distributions():
    clean = np.random.default_rng(1).normal(size=1000)
    wm = clean + 100.0
    assert tpr_at_fpr(wm, clean, 0.01) == 1.0


def test_tpr_threshold_matches_normal_quantile():
    from scipy import stats as sps

    clean = np.random.default_rng(3).normal(size=100_000)
    threshold = np.quantile(clean, 0.99)
    assert abs(threshold - sps.norm.ppf(0.99)) < 0.1  # 2.326 +- 0.1


def test_tpr_validation():
    with pytest.raises(ValueError):
        tpr_at_fpr([], [1.0], 0.01)
    with pytest.raises(ValueError):
        tpr_at_fpr([1.0], [1.0], 0.0)
