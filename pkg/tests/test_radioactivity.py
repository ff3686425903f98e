import inspect

import numpy as np
import pytest

import tokenmark.student as student_mod
from tokenmark.core import TokenSequence, WatermarkParams, make_rar_schedule
from tokenmark.radioactivity import RadioactivityConfig, run_radioactivity
from tokenmark.student import (
    StudentModel,
    generate_student,
    generate_student_matrix,
    load_student,
    save_student,
    train_student,
)


def seq_of(tokens, schedule):
    return TokenSequence(tokens=np.asarray(tokens, dtype=np.int32), schedule=schedule)


def test_order0_single_sequence_memorization():
    # smoothing -> 0: the student reproduces the per-position-class empirical
    # distribution of its single training sequence
    sched = make_rar_schedule(12)
    train = seq_of(np.arange(12) * 3 % 64, sched)
    model = train_student([train], order=0, smoothing=1e-12)
    outs = generate_student(model, 5, seed=1)
    for out in outs:
        assert np.array_equal(out.tokens, train.tokens)


def test_order1_deterministic_chain():
    # corpus where t is always followed by (t+1) mod V: the learned
    # transition puts its mass on that successor
    vocab = 32
    sched = make_rar_schedule(16)
    corpus = [
        seq_of((np.arange(16) + start) % vocab, sched) for start in range(8)
    ]
    model = train_student(corpus, order=1, smoothing=1e-12)
    outs = generate_student_matrix(model, 4, seed=9)
    diffs = np.diff(outs, axis=1) % vocab
    assert np.all(diffs == 1)


def test_student_generation_deterministic():
    sched = make_rar_schedule(20)
    corpus = [seq_of(np.random.default_rng(i).integers(0, 64, 20), sched) for i in range(5)]
    model = train_student(corpus, order=1, smoothing=0.01)
    a = generate_student_matrix(model, 3, seed=4)
    b = generate_student_matrix(model, 3, seed=4)
    assert np.array_equal(a, b)
    c = generate_student_matrix(model, 3, seed=5)
    assert not np.array_equal(a, c)


def test_train_student_validation():
    sched = make_rar_schedule(4)
    with pytest.raises(ValueError):
        train_student([], order=1, smoothing=0.1)
    mixed = [
        seq_of([1, 2, 3, 4], sched),
        seq_of([1, 2, 3, 4, 5], make_rar_schedule(5)),
    ]
    with pytest.raises(ValueError):
        train_student(mixed, order=1, smoothing=0.1)
    with pytest.raises(ValueError):
        StudentModel(order=-1, smoothing=0.1, schedule=sched, vocab_size=8)
    with pytest.raises(ValueError):
        StudentModel(order=1, smoothing=0.0, schedule=sched, vocab_size=8)


def test_student_serialization_round_trip(tmp_path):
    sched = make_rar_schedule(10)
    corpus = [seq_of(np.random.default_rng(i).integers(0, 50, 10), sched) for i in range(6)]
    model = train_student(corpus, order=2, smoothing=0.25)
    path = tmp_path / "student.tms"
    save_student(model, path)
    assert path.read_bytes()[:4] == b"TMS1"
    back = load_student(path)
    assert back.order == model.order
    assert back.smoothing == model.smoothing
    assert back.schedule == model.schedule
    assert back.vocab_size == model.vocab_size
    assert back._raw == model._raw
    assert np.array_equal(
        generate_student_matrix(back, 4, seed=3),
        generate_student_matrix(model, 4, seed=3),
    )


def test_no_leak_structural():
    # the student path must know nothing about watermarking internals
    source = inspect.getsource(student_mod)
    for banned in ("GreenMask", "delta", "gamma", "partition", "bias"):
        assert banned not in source
    import tokenmark.embed as embed_mod

    assert "tokenmark.embed" not in source
    assert embed_mod.__name__ not in [
        m for m in dir(student_mod) if not m.startswith("_")
    ]


def test_clean_corpus_student_at_chance():
    # no watermark in the training data -> detection on student outputs is
    # at the false-positive level
    cfg = RadioactivityConfig(
        schedule=make_rar_schedule(300),
        params=WatermarkParams(gamma=0.25, delta=2.0, tau=4.0, initial_seed=42),
        n_train=300,
        n_eval=400,
        n_clean=3000,
        order=1,
        smoothing=1e-4,
        master_seed=11,
        watermark_corpus=False,
    )
    res = run_radioactivity(cfg)
    assert res.m2_tpr <= 0.04
    assert abs(res.m2_mean_z) < 0.3


def test_single_sequence_overfit_transfers():
    cfg = RadioactivityConfig(
        schedule=make_rar_schedule(340),
        params=WatermarkParams(gamma=0.25, delta=6.0, tau=4.0, initial_seed=42),
        n_train=1,
        n_eval=50,
        n_clean=2000,
        order=1,
        smoothing=1e-9,
        master_seed=12,
    )
    res = run_radioactivity(cfg)
    assert res.m2_tpr == 1.0
    assert res.m2_mean_z > 4.0


def test_corpus_scale_transfer_and_ordering():
    # desk-scale radioactivity: the student's outputs stay well above chance,
    # and the source model detects at least as well as the student
    cfg = RadioactivityConfig(
        schedule=make_rar_schedule(340),
        params=WatermarkParams(gamma=0.25, delta=6.0, tau=4.0, initial_seed=42),
        n_train=400,
        n_eval=100,
        n_clean=3000,
        order=1,
        smoothing=1e-4,
        master_seed=13,
    )
    res = run_radioactivity(cfg)
    assert res.m2_mean_z > 4.0
    assert res.m2_tpr >= 0.5
    assert res.m1_tpr >= res.m2_tpr


def test_transfer_monotone_in_delta():
    tprs = []
    for delta in (0.0, 2.0, 6.0):
        cfg = RadioactivityConfig(
            schedule=make_rar_schedule(200),
            params=WatermarkParams(gamma=0.25, delta=delta, tau=4.0, initial_seed=42),
            n_train=200,
            n_eval=100,
            n_clean=2000,
            order=1,
            smoothing=1e-4,
            master_seed=14,
        )
        tprs.append(run_radioactivity(cfg).m2_tpr)
    assert tprs[0] <= tprs[1] <= tprs[2] or (
        tprs[1] >= 0.9 and tprs[2] >= 0.9 and tprs[0] <= 0.05
    )
