"""Experiment configuration: one YAML file, validated on load, echoed into
every run's output directory.

The master seed fans out to per-purpose sub-seeds through the SplitMix64
counter chain, so raising a trial count never perturbs the trials that
already existed.

Key reference (defaults in parentheses):

    master_seed        int (20250801)  root of all randomness
    codebook_size      int (4096)      vocabulary size |V|
    schedule           'var' | 'rar' | 'rar:<N>' | {kind, unit_sizes} ('var')
    gamma              float (0.25)    green-list fraction
    delta              float (2.0)     green logit bias
    tau                float (4.0)     detection threshold on z
    initial_seed       int (42)        sentinel hashed before the first unit
    temperature        float (1.0)     synthetic-model logit scale divisor
    context_sensitive  bool (false)    Markov-style synthetic logits
    channel            null | attack name | {kind, flip_prob, replacement,
                       per_unit_probs, burst_len, nearby_radius, seed}
    student            {order (1), smoothing (1e-4)}
    trials             {watermarked (1000), clean (10000),
                        train (2000), eval (500)}
    deltas             list of floats for the delta sweep ([0,1,2,4,6])
    flip_probs         list of floats for the flip sweep (0.0..0.9)
    threads            int (1), overridden by --threads / TOKENMARK_THREADS
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import channel as channel_mod
from .core import (
    Codebook,
    ScheduleKind,
    UnitSchedule,
    WatermarkParams,
    make_rar_schedule,
    make_var_schedule,
)
from .embed import SyntheticModel
from ._kernels.bits import sm64_at

# Purpose indices for master-seed fanout (stable: append only).
SEED_MODEL = 0
SEED_WATERMARKED = 1
SEED_CLEAN = 2
SEED_CHANNEL = 3
SEED_STUDENT = 4
SEED_RADIOACTIVITY = 5


class ConfigError(ValueError):
    """Raised for invalid or unparseable experiment configuration."""


_DEFAULTS = {
    "master_seed": 20250801,
    "codebook_size": 4096,
    "schedule": "var",
    "gamma": 0.25,
    "delta": 2.0,
    "tau": 4.0,
    "initial_seed": 42,
    "temperature": 1.0,
    "context_sensitive": False,
    "channel": None,
    "student": {"order": 1, "smoothing": 1e-4},
    "trials": {"watermarked": 1000, "clean": 10000, "train": 2000, "eval": 500},
    "deltas": [0.0, 1.0, 2.0, 4.0, 6.0],
    "flip_probs": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
    "threads": 1,
}


def _parse_schedule(value) -> UnitSchedule:
    if isinstance(value, str):
        if value == "var":
            return make_var_schedule()
        if value == "rar":
            return make_rar_schedule(680)
        if value.startswith("rar:"):
            return make_rar_schedule(int(value.split(":", 1)[1]))
        raise ConfigError(f"unknown schedule spec {value!r}")
    if isinstance(value, dict):
        kind = value.get("kind")
        if kind == "PerToken":
            if "tokens" in value:
                return make_rar_schedule(int(value["tokens"]))
            return make_rar_schedule(len(value["unit_sizes"]))
        if kind == "MultiScale":
            return UnitSchedule(
                kind=ScheduleKind.MULTI_SCALE,
                unit_sizes=tuple(int(t) for t in value["unit_sizes"]),
            )
        raise ConfigError(f"unknown schedule kind {kind!r}")
    raise ConfigError(f"cannot parse schedule from {value!r}")


def _parse_channel(value, master_seed: int) -> channel_mod.ChannelSpec | None:
    if value is None:
        return None
    seed = sm64_at(master_seed, SEED_CHANNEL)
    if isinstance(value, str):
        return channel_mod.attack_preset(value, channel_seed=seed)
    if not isinstance(value, dict):
        raise ConfigError(f"cannot parse channel from {value!r}")
    value = dict(value)
    if "attack" in value:
        return channel_mod.attack_preset(value["attack"], channel_seed=seed)
    try:
        kind = channel_mod.ChannelKind(value.pop("kind", "lossless"))
        repl = channel_mod.Replacement(value.pop("replacement", "uniform"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    per_unit = value.pop("per_unit_probs", None)
    if per_unit == "var_valley":
        per_unit = channel_mod.VAR_VALLEY_FLIP_PROFILE
    return channel_mod.ChannelSpec(
        kind=kind,
        flip_prob=float(value.pop("flip_prob", 0.0)),
        per_unit_probs=tuple(per_unit) if per_unit is not None else None,
        replacement=repl,
        channel_seed=int(value.pop("seed", seed)),
        burst_len=int(value.pop("burst_len", 8)),
        nearby_radius=int(value.pop("nearby_radius", 8)),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict = field(repr=False)
    master_seed: int
    codebook: Codebook
    schedule: UnitSchedule
    params: WatermarkParams
    temperature: float
    context_sensitive: bool
    channel: channel_mod.ChannelSpec | None
    student_order: int
    student_smoothing: float
    n_watermarked: int
    n_clean: int
    n_train: int
    n_eval: int
    deltas: tuple[float, ...]
    flip_probs: tuple[float, ...]
    threads: int

    @staticmethod
    def from_dict(data: dict) -> "ExperimentConfig":
        merged = dict(_DEFAULTS)
        merged["student"] = dict(_DEFAULTS["student"])
        merged["trials"] = dict(_DEFAULTS["trials"])
        for key, value in (data or {}).items():
            if key in ("student", "trials"):
                if not isinstance(value, dict):
                    raise ConfigError(f"{key} must be a mapping")
                unknown = set(value) - set(merged[key])
                if unknown:
                    raise ConfigError(f"unknown {key} keys: {sorted(unknown)}")
                merged[key].update(value)
            elif key in merged:
                merged[key] = value
            else:
                raise ConfigError(f"unknown config key: {key}")
        try:
            master_seed = int(merged["master_seed"])
            codebook = Codebook(int(merged["codebook_size"]))
            schedule = _parse_schedule(merged["schedule"])
            params = WatermarkParams(
                gamma=float(merged["gamma"]),
                delta=float(merged["delta"]),
                tau=float(merged["tau"]),
                initial_seed=int(merged["initial_seed"]),
            )
            params.green_size(codebook)
            cfg = ExperimentConfig(
                raw=merged,
                master_seed=master_seed,
                codebook=codebook,
                schedule=schedule,
                params=params,
                temperature=float(merged["temperature"]),
                context_sensitive=bool(merged["context_sensitive"]),
                channel=_parse_channel(merged["channel"], master_seed),
                student_order=int(merged["student"]["order"]),
                student_smoothing=float(merged["student"]["smoothing"]),
                n_watermarked=int(merged["trials"]["watermarked"]),
                n_clean=int(merged["trials"]["clean"]),
                n_train=int(merged["trials"]["train"]),
                n_eval=int(merged["trials"]["eval"]),
                deltas=tuple(float(d) for d in merged["deltas"]),
                flip_probs=tuple(float(p) for p in merged["flip_probs"]),
                threads=int(merged["threads"]),
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if cfg.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if min(cfg.n_watermarked, cfg.n_clean, cfg.n_train, cfg.n_eval) < 1:
            raise ConfigError("trial counts must be positive")
        return cfg

    def model(self) -> SyntheticModel:
        return SyntheticModel(
            model_seed=sm64_at(self.master_seed, SEED_MODEL),
            vocab_size=self.codebook.size,
            temperature=self.temperature,
            context_sensitivity=self.context_sensitive,
        )

    def purpose_seed(self, purpose: int) -> int:
        return sm64_at(self.master_seed, purpose)

    def echo(self, out_dir: Path) -> Path:
        """Write the effective configuration next to the run's outputs."""
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / "effective_config.yaml"
        path.write_text(yaml.safe_dump(self.raw, sort_keys=True))
        return path


def _set_dotted(data: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-mapping key {key!r}")
    node[keys[-1]] = value


def load_config(path: str | None, overrides: list[str] | None = None) -> ExperimentConfig:
    """Load a YAML config file (or defaults) and apply key=value overrides."""
    data: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML in {path}: {exc}") from None
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must be a mapping")
        data = loaded
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw_value = item.split("=", 1)
        _set_dotted(data, key.strip(), yaml.safe_load(raw_value))
    return ExperimentConfig.from_dict(data)
