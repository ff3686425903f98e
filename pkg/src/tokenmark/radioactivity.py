"""Radioactivity protocol: does the watermark survive training a student?

Pipeline: a watermarked corpus is generated from the source model, optionally
pushed through a token channel, and used to train an n-gram student. The
student then generates on its own, with no watermarking anywhere in its
path, and detection runs on those outputs. Transfer is scored as
TPR@FPR=1% against a shared clean-sequence threshold pool; the same pool
scores held-out watermarked source outputs for the m1 baseline, since the
null distribution of the z-statistic does not depend on the generator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import channel as channel_mod
from .core import Codebook, UnitSchedule, WatermarkParams, make_rar_schedule
from .detect import tpr_at_fpr, z_values_batch
from .embed import SyntheticModel, batch_seeds, generate_batch
from ._kernels.bits import sm64_at
from .student import StudentModel, generate_student_matrix, train_student_matrix

# Sub-seed purposes fanned out from the experiment master seed.
_P_MODEL, _P_TRAIN, _P_HELD_OUT, _P_CLEAN, _P_STUDENT = range(5)


@dataclass(frozen=True)
class RadioactivityConfig:
    schedule: UnitSchedule = field(default_factory=lambda: make_rar_schedule(680))
    codebook: Codebook = field(default_factory=Codebook)
    params: WatermarkParams = field(default_factory=WatermarkParams)
    temperature: float = 1.0
    channel: channel_mod.ChannelSpec | None = None
    n_train: int = 2000
    n_eval: int = 500
    n_clean: int = 10000
    order: int = 1
    smoothing: float = 1e-4
    master_seed: int = 0
    watermark_corpus: bool = True
    fpr: float = 0.01
    threads: int = 1


@dataclass(frozen=True)
class RadioactivityResult:
    m1_tpr: float
    m2_tpr: float
    m2_mean_z: float
    n_train: int
    n_eval: int
    m1_mean_z: float

    def to_json(self) -> dict:
        return {
            "m1_tpr": self.m1_tpr,
            "m2_tpr": self.m2_tpr,
            "m2_mean_z": self.m2_mean_z,
            "m1_mean_z": self.m1_mean_z,
            "n_train": self.n_train,
            "n_eval": self.n_eval,
        }


def train_student_on_corpus(cfg: RadioactivityConfig) -> StudentModel:
    """Generate the training corpus and fit the student."""
    model = SyntheticModel(
        sm64_at(cfg.master_seed, _P_MODEL), cfg.codebook.size, cfg.temperature
    )
    params = cfg.params if cfg.watermark_corpus else None
    seeds = batch_seeds(sm64_at(cfg.master_seed, _P_TRAIN), cfg.n_train)
    corpus, _ = generate_batch(model, cfg.schedule, cfg.codebook, seeds, params)
    if cfg.channel is not None:
        corpus = channel_mod.apply_batch(cfg.channel, corpus, cfg.schedule, cfg.codebook)
    return train_student_matrix(
        corpus, cfg.schedule, cfg.order, cfg.smoothing, cfg.codebook.size
    )


def run_radioactivity(cfg: RadioactivityConfig) -> RadioactivityResult:
    model = SyntheticModel(
        sm64_at(cfg.master_seed, _P_MODEL), cfg.codebook.size, cfg.temperature
    )
    student = train_student_on_corpus(cfg)

    m2_tokens = generate_student_matrix(
        student, cfg.n_eval, sm64_at(cfg.master_seed, _P_STUDENT)
    )
    m2_z = z_values_batch(m2_tokens, cfg.schedule, cfg.codebook, cfg.params)

    held_seeds = batch_seeds(sm64_at(cfg.master_seed, _P_HELD_OUT), cfg.n_eval)
    m1_tokens, _ = generate_batch(
        model, cfg.schedule, cfg.codebook, held_seeds, cfg.params
    )
    m1_z = z_values_batch(m1_tokens, cfg.schedule, cfg.codebook, cfg.params)

    clean_seeds = batch_seeds(sm64_at(cfg.master_seed, _P_CLEAN), cfg.n_clean)
    clean_tokens, _ = generate_batch(model, cfg.schedule, cfg.codebook, clean_seeds)
    clean_z = z_values_batch(clean_tokens, cfg.schedule, cfg.codebook, cfg.params)

    return RadioactivityResult(
        m1_tpr=tpr_at_fpr(m1_z, clean_z, cfg.fpr),
        m2_tpr=tpr_at_fpr(m2_z, clean_z, cfg.fpr),
        m2_mean_z=float(m2_z.mean()),
        n_train=cfg.n_train,
        n_eval=cfg.n_eval,
        m1_mean_z=float(m1_z.mean()),
    )
