"""Command-line surface: dataset preparation, the two training stages,
inference, evaluation, spectrogram rendering, and the layer benchmark.

Every command validates its configuration before touching data, and every
failure class exits nonzero with a single diagnostic line on stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import bench_superpixel
from .config import ConfigError, load_train_config
from .data import read_wav, split_clips, synth_dataset, write_manifest, write_wav
from .dsp import spectrogram_db
from .metrics import format_report
from .training import (
    CheckpointError,
    evaluate_model,
    generator_from_checkpoint,
    infer,
    load_checkpoint,
    prepare_splits,
    train_autoencoder,
    train_gan,
)

__all__ = ["main", "render_pgm"]


def render_pgm(db: np.ndarray) -> bytes:
    """Binary portable graymap of a (windows, bins) dB spectrogram.

    Columns are time windows, rows are frequency with bin 0 at the bottom;
    values normalize to the 0..255 range per image.
    """
    img = np.asarray(db, dtype=np.float64).T[::-1]
    lo, hi = img.min(), img.max()
    norm = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
    gray = np.rint(norm * 255.0).astype(np.uint8)
    height, width = gray.shape
    return f"P5\n{width} {height}\n255\n".encode() + gray.tobytes()


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    if getattr(args, "ratio", None) is not None:
        out["ratio"] = args.ratio
    if getattr(args, "depth", None) is not None:
        out["gen.depth"] = args.depth
    if getattr(args, "mode", None) is not None:
        out["mode"] = args.mode
    return out


def _load_config(args):
    return load_train_config(getattr(args, "config", None), _overrides(args))


def cmd_prepare(args) -> int:
    cfg = _load_config(args)
    if cfg.recipe is None:
        raise ConfigError("prepare materializes synthetic data; config uses data.source = dir")
    clips = synth_dataset(cfg.recipe, cfg.seed)
    splits = split_clips(clips, cfg.train_frac, cfg.val_frac)
    manifest = write_manifest(args.out, splits)
    counts = {split: len(v) for split, v in splits.items()}
    print(f"wrote {manifest} ({counts['train']} train / {counts['val']} val / {counts['test']} test clips)")
    return 0


def cmd_train_ae(args) -> int:
    cfg = _load_config(args)
    splits = prepare_splits(cfg)
    path = train_autoencoder(cfg, splits, args.out)
    print(f"autoencoder checkpoint: {path}")
    return 0


def cmd_train_gan(args) -> int:
    cfg = _load_config(args)
    splits = prepare_splits(cfg)
    ae_path = resume_path = None
    if args.checkpoint is not None:
        kind = load_checkpoint(args.checkpoint).kind
        if kind == "gan":
            resume_path = args.checkpoint
        else:
            ae_path = args.checkpoint
    path = train_gan(cfg, splits, args.out, ae_checkpoint_path=ae_path, resume_path=resume_path)
    print(f"generator checkpoint: {path}")
    return 0


def cmd_infer(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    if ck.kind != "gan":
        raise CheckpointError(f"{args.checkpoint}: inference needs a gan checkpoint, got {ck.kind}")
    gen = generator_from_checkpoint(ck)
    ratio = args.ratio if args.ratio is not None else int(ck.meta["ratio"])
    clip = read_wav(args.input)
    sr = infer(gen, clip.samples, ratio)
    write_wav(args.out, sr, clip.sample_rate * ratio)
    print(f"wrote {args.out} ({len(sr)} samples at {clip.sample_rate * ratio} Hz)")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    ck = load_checkpoint(args.checkpoint)
    if ck.kind != "gan":
        raise CheckpointError(f"{args.checkpoint}: evaluation needs a gan checkpoint, got {ck.kind}")
    gen = generator_from_checkpoint(ck)
    splits = prepare_splits(cfg)
    clips = splits["test"] or splits["val"]
    if not clips:
        raise ConfigError("dataset has no held-out clips to evaluate")
    text = format_report(evaluate_model(gen, clips, cfg.ratio))
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


def cmd_spectrogram(args) -> int:
    clip = read_wav(args.input)
    image = render_pgm(spectrogram_db(clip.samples))
    Path(args.out).write_bytes(image)
    print(f"wrote {args.out}")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    sys.stdout.write(bench_superpixel(cfg))
    return 0


def _add_config_flags(p, *, mode=True):
    p.add_argument("--config", metavar="PATH", help="key=value config file")
    p.add_argument("--seed", type=int, metavar="N", help="override the config seed")
    p.add_argument("--ratio", type=int, choices=(2, 4, 6), help="upsampling ratio")
    p.add_argument("--depth", type=int, metavar="L", help="generator depth (block pairs)")
    if mode:
        p.add_argument("--mode", choices=("l2", "l2+f", "l2+f+adv"), help="active loss terms")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="audiosr", description="GAN-based audio super-resolution")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="materialize the synthetic dataset as WAVs + manifest")
    _add_config_flags(p)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-ae", help="pretrain the feature-loss autoencoder")
    _add_config_flags(p)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_train_ae)

    p = sub.add_parser("train-gan", help="train the generator (and discriminator, mode permitting)")
    _add_config_flags(p)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument(
        "--checkpoint",
        metavar="PATH",
        help="autoencoder checkpoint to freeze, or gan checkpoint to resume",
    )
    p.set_defaults(func=cmd_train_gan)

    p = sub.add_parser("infer", help="super-resolve a WAV clip")
    p.add_argument("input", metavar="IN.wav")
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--ratio", type=int, choices=(2, 4, 6), help="default: ratio the model trained at")
    p.add_argument("--out", required=True, metavar="OUT.wav")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score a checkpoint against the spline baseline")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True, metavar="PATH")
    p.add_argument("--out", metavar="REPORT", help="also write the report to a file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("spectrogram", help="render a log-power spectrogram as a PGM image")
    p.add_argument("input", metavar="IN.wav")
    p.add_argument("--out", required=True, metavar="OUT.pgm")
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("bench-superpixel", help="time shuffle vs strided-conv training steps")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, ValueError, OSError, FloatingPointError) as exc:
        print(f"audiosr: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
