"""Command-line interface.

Subcommands: generate, detect, calibrate, attack-sweep, calibrate-attacks,
radioactivity, report. Every command is deterministic given the config file
and master seed; reruns produce byte-identical output files.

Exit codes: 0 ok, 1 watermark not detected (single-file detect), 2 usage or
parse error, 3 I/O error. TOKENMARK_THREADS is the fallback for --threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import channel as channel_mod
from . import seqio, stats
from .config import (
    ConfigError,
    ExperimentConfig,
    SEED_CHANNEL,
    SEED_CLEAN,
    SEED_RADIOACTIVITY,
    SEED_WATERMARKED,
    load_config,
)
from .core import TokenSequence
from .detect import detect as detect_seq
from .detect import tpr_at_fpr
from .embed import batch_seeds, generate_batch, generate_clean, generate_watermarked
from .radioactivity import RadioactivityConfig, run_radioactivity
from .seqio import SequenceFormatError


def _fmt(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _resolve_threads(args, cfg: ExperimentConfig) -> int:
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("TOKENMARK_THREADS")
    if env:
        return int(env)
    return cfg.threads


def _load_cfg(args) -> ExperimentConfig:
    return load_config(getattr(args, "config", None), getattr(args, "set", None))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _generate_tokens(cfg: ExperimentConfig, n: int, watermark: bool, threads: int):
    """Token matrix for n sequences, watermarked or clean, channel applied."""
    model = cfg.model()
    purpose = SEED_WATERMARKED if watermark else SEED_CLEAN
    seed = cfg.purpose_seed(purpose)
    params = cfg.params if watermark else None
    if model.context_sensitive:
        rows = []
        for i in range(n):
            gen_seed = int(batch_seeds(seed, 1, i)[0])
            if watermark:
                seq = generate_watermarked(
                    model, cfg.schedule, cfg.codebook, cfg.params, gen_seed
                )
            else:
                seq = generate_clean(model, cfg.schedule, cfg.codebook, gen_seed)
            rows.append(seq.tokens)
        tokens = np.stack(rows)
    else:
        tokens, _ = generate_batch(
            model, cfg.schedule, cfg.codebook, batch_seeds(seed, n), params
        )
    if cfg.channel is not None:
        tokens = channel_mod.apply_batch(cfg.channel, tokens, cfg.schedule, cfg.codebook)
    return tokens


def cmd_generate(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    threads = _resolve_threads(args, cfg)
    tokens = _generate_tokens(cfg, args.n, args.watermark, threads)
    ext = "tmkb" if args.binary else "tmk"
    files = []
    for i in range(args.n):
        name = f"seq_{i:05d}.{ext}"
        seq = TokenSequence(tokens=tokens[i], schedule=cfg.schedule)
        seqio.write_sequence(seq, out / name, binary=args.binary)
        files.append(name)
    manifest = {
        "mode": "watermark" if args.watermark else "clean",
        "n": args.n,
        "format": "binary" if args.binary else "text",
        "files": files,
        "master_seed": cfg.master_seed,
        "channel": None if cfg.channel is None else cfg.channel.kind.value,
    }
    _write_json(out / "manifest.json", manifest)
    cfg.echo(out)
    print(f"wrote {args.n} {manifest['mode']} sequence(s) to {out}")
    return 0


def cmd_detect(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    last_decision = True
    for name in args.inputs:
        try:
            seq = seqio.read_sequence(name)
        except SequenceFormatError as exc:
            raise SequenceFormatError(f"{name}: {exc}") from None
        report = detect_seq(seq, cfg.codebook, cfg.params)
        last_decision = report.decision
        print(
            f"{name}: z={report.z_value:.4f} green={report.green_count}/"
            f"{report.total_tokens} decision={'watermarked' if report.decision else 'clean'}"
        )
        rows.append(
            (
                Path(name).name,
                report.green_count,
                report.total_tokens,
                report.gamma,
                report.z_value,
                report.p_value,
                report.decision,
            )
        )
        if out is not None:
            _write_json(out / (Path(name).stem + ".report.json"), report.to_json())
        elif len(args.inputs) == 1:
            print(json.dumps(report.to_json(), indent=2, sort_keys=True))
    if out is not None:
        _write_csv(
            out / "summary.csv",
            ["file", "green_count", "total", "gamma", "z", "p_value", "decision"],
            rows,
        )
        cfg.echo(out)
    if len(args.inputs) == 1 and not last_decision:
        return 1
    return 0


def cmd_calibrate(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    threads = _resolve_threads(args, cfg)
    model = cfg.model()
    summary, fpr, z = stats.calibrate_fpr(
        cfg.n_clean,
        cfg.params,
        cfg.schedule,
        cfg.codebook,
        model,
        cfg.purpose_seed(SEED_CLEAN),
        threads,
    )
    result = {
        "summary": summary.to_json(),
        "tau": cfg.params.tau,
        "empirical_fpr": fpr,
        "expected_fpr_normal": stats.normal_tail(cfg.params.tau),
    }
    _write_json(out / "calibration.json", result)
    _write_csv(out / "z_values.csv", ["z"], [(float(v),) for v in z])
    print(
        f"clean calibration: n={summary.n} mean={summary.mean:.4f} "
        f"var={summary.variance:.4f} FPR(tau={cfg.params.tau})={fpr:.2e}"
    )

    # TPR-versus-delta sweep against the shared clean pool.
    sweep_rows = []
    for delta in cfg.deltas:
        params_d = replace(cfg.params, delta=delta)
        wz = stats.watermarked_z_sample(
            cfg.n_watermarked,
            model,
            cfg.schedule,
            cfg.codebook,
            params_d,
            cfg.purpose_seed(SEED_WATERMARKED),
            threads,
        )
        tpr = tpr_at_fpr(wz, z, 0.01)
        sweep_rows.append((delta, tpr, float(wz.mean())))
        print(f"delta={delta:g}: TPR@FPR=1% {tpr:.4f} mean z {wz.mean():.2f}")
    _write_csv(out / "delta_sweep.csv", ["delta", "tpr_at_fpr1", "mean_z"], sweep_rows)
    cfg.echo(out)
    return 0


def _flip_channel(cfg: ExperimentConfig, flip_prob: float) -> channel_mod.ChannelSpec:
    return channel_mod.ChannelSpec(
        kind=channel_mod.ChannelKind.UNIFORM_FLIP,
        flip_prob=flip_prob,
        channel_seed=cfg.purpose_seed(SEED_CHANNEL),
    )


def _swept_tpr(cfg, model, clean_z, spec, threads) -> tuple[float, float]:
    def push(tokens, start):
        # row_offset keeps per-row channel seeds aligned with trial indices
        # across thread blocks, so results are thread-count independent.
        return channel_mod.apply_batch(
            spec, tokens, cfg.schedule, cfg.codebook, row_offset=start
        )

    wz = stats.watermarked_z_sample(
        cfg.n_watermarked,
        model,
        cfg.schedule,
        cfg.codebook,
        cfg.params,
        cfg.purpose_seed(SEED_WATERMARKED),
        threads,
        channel_apply=push,
    )
    return tpr_at_fpr(wz, clean_z, 0.01), float(wz.mean())


def cmd_attack_sweep(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    threads = _resolve_threads(args, cfg)
    model = cfg.model()
    clean_z = stats.clean_z_sample(
        cfg.n_clean, model, cfg.schedule, cfg.codebook, cfg.params,
        cfg.purpose_seed(SEED_CLEAN), threads,
    )
    preset_rows = []
    for name in sorted(channel_mod.ATTACK_FLIP_PROBS):
        spec = channel_mod.attack_preset(name, channel_seed=_flip_channel(cfg, 0.0).channel_seed)
        tpr, mean_z = _swept_tpr(cfg, model, clean_z, spec, threads)
        preset_rows.append((name, spec.flip_prob, tpr, mean_z))
        print(f"attack {name:10s} flip={spec.flip_prob:.3f} TPR@FPR=1% {tpr:.4f} mean z {mean_z:.2f}")
    _write_csv(out / "attack_sweep.csv", ["attack", "flip_prob", "tpr_at_fpr1", "mean_z"], preset_rows)

    flip_rows = []
    for p in cfg.flip_probs:
        tpr, mean_z = _swept_tpr(cfg, model, clean_z, _flip_channel(cfg, p), threads)
        flip_rows.append((p, tpr, mean_z))
        print(f"flip_prob={p:.2f}: TPR@FPR=1% {tpr:.4f} mean z {mean_z:.2f}")
    _write_csv(out / "flip_sweep.csv", ["flip_prob", "tpr_at_fpr1", "mean_z"], flip_rows)
    cfg.echo(out)
    return 0


def cmd_calibrate_attacks(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    threads = _resolve_threads(args, cfg)
    model = cfg.model()
    clean_z = stats.clean_z_sample(
        cfg.n_clean, model, cfg.schedule, cfg.codebook, cfg.params,
        cfg.purpose_seed(SEED_CLEAN), threads,
    )
    grid = [round(0.025 * i, 3) for i in range(40)]
    curve = []
    for p in grid:
        tpr, mean_z = _swept_tpr(cfg, model, clean_z, _flip_channel(cfg, p), threads)
        curve.append((p, tpr, mean_z))
        print(f"flip_prob={p:.3f}: TPR@FPR=1% {tpr:.4f}")
    _write_csv(out / "attack_curve.csv", ["flip_prob", "tpr_at_fpr1", "mean_z"], curve)

    # Invert the (noisy, decreasing) curve for each preset's target TPR.
    ps = np.array([c[0] for c in curve])
    tprs = np.array([c[1] for c in curve])
    order = np.argsort(tprs)
    calibrated = {"none": 0.0}
    for name, target in channel_mod.ATTACK_TARGET_TPR.items():
        if name == "none":
            continue
        calibrated[name] = float(
            np.clip(np.interp(target, tprs[order], ps[order]), 0.0, 1.0)
        )
    _write_json(out / "attack_calibration.json", calibrated)
    for name in sorted(calibrated):
        print(f"{name:10s} -> flip_prob {calibrated[name]:.3f}")
    cfg.echo(out)
    return 0


def cmd_radioactivity(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    threads = _resolve_threads(args, cfg)
    rcfg = RadioactivityConfig(
        schedule=cfg.schedule,
        codebook=cfg.codebook,
        params=cfg.params,
        temperature=cfg.temperature,
        channel=cfg.channel,
        n_train=cfg.n_train,
        n_eval=cfg.n_eval,
        n_clean=cfg.n_clean,
        order=cfg.student_order,
        smoothing=cfg.student_smoothing,
        master_seed=cfg.purpose_seed(SEED_RADIOACTIVITY),
        threads=threads,
    )
    result = run_radioactivity(rcfg)
    _write_json(out / "radioactivity.json", result.to_json())
    _write_csv(
        out / "radioactivity.csv",
        ["n_train", "n_eval", "m1_tpr", "m2_tpr", "m1_mean_z", "m2_mean_z"],
        [(result.n_train, result.n_eval, result.m1_tpr, result.m2_tpr,
          result.m1_mean_z, result.m2_mean_z)],
    )
    print(
        f"radioactivity: m1 TPR {result.m1_tpr:.3f} -> m2 TPR {result.m2_tpr:.3f} "
        f"(m2 mean z {result.m2_mean_z:.2f}, {result.n_train} training sequences)"
    )
    cfg.echo(out)
    return 0


def cmd_report(args) -> int:
    src = Path(args.dir)
    if not src.is_dir():
        raise OSError(f"{src} is not a directory")
    consolidated = {}
    for name in (
        "manifest.json",
        "calibration.json",
        "radioactivity.json",
        "attack_calibration.json",
    ):
        path = src / name
        if path.exists():
            consolidated[name] = json.loads(path.read_text())
    csvs = sorted(p.name for p in src.glob("*.csv"))
    consolidated["csv_files"] = csvs
    _write_json(src / "report.json", consolidated)
    print(f"report over {src}:")
    for key in sorted(consolidated):
        if key == "csv_files":
            print(f"  data files: {', '.join(csvs) if csvs else '(none)'}")
        else:
            print(f"  {key}: {json.dumps(consolidated[key], sort_keys=True)[:200]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokenmark",
        description="Green/red-list watermarking testbed for token streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="YAML experiment config")
        p.add_argument(
            "--set", action="append", metavar="KEY=VALUE",
            help="override a config key (dotted paths allowed)",
        )
        p.add_argument("--threads", type=int, help="trial-level parallelism")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("generate", help="generate token-sequence files")
    common(p)
    p.add_argument("-n", type=int, required=True, help="number of sequences")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--watermark", action="store_true")
    mode.add_argument("--clean", action="store_true")
    p.add_argument("--binary", action="store_true", help="write TMK1 binary files")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("detect", help="detect the watermark in token files")
    common(p, needs_out=False)
    p.add_argument("--out", help="write per-file reports and summary.csv here")
    p.add_argument("inputs", nargs="+", help="token-sequence files")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("calibrate", help="clean-sequence FPR calibration + delta sweep")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("attack-sweep", help="TPR under attack presets and flip grid")
    common(p)
    p.set_defaults(func=cmd_attack_sweep)

    p = sub.add_parser(
        "calibrate-attacks", help="fit preset flip probabilities to target TPRs"
    )
    common(p)
    p.set_defaults(func=cmd_calibrate_attacks)

    p = sub.add_parser("radioactivity", help="train a student and test transfer")
    common(p)
    p.set_defaults(func=cmd_radioactivity)

    p = sub.add_parser("report", help="consolidate a run directory")
    p.add_argument("dir", help="output directory of a previous run")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SequenceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
