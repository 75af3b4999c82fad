"""Training orchestration: deterministic data schedule, autoencoder
pretraining, alternating GAN updates, checkpointing, and full-clip inference.

Determinism model: every random draw comes from a SeedSequence branch keyed
by (user seed, stream tag, index), so the batch delivered at (epoch, index)
is a pure function of the config — training can resume from any step and
reproduce an uninterrupted run bit for bit.
"""

from __future__ import annotations

import json
import os
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autodiff import Adam, Tensor, zero_grads
from .config import TrainConfig
from .data import load_manifest, make_pair, split_clips, synth_dataset
from .dsp import decimate, lowpass_fir, spline_upsample
from .losses import discriminator_loss, generator_loss, l2_loss
from .metrics import evaluate_clip
from .models import Autoencoder, Discriminator, Generator, GeneratorSpec

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "TrainingDiverged",
    "save_checkpoint",
    "load_checkpoint",
    "build_models",
    "prepare_splits",
    "train_autoencoder",
    "train_gan",
    "generator_from_checkpoint",
    "infer",
    "evaluate_model",
]

MAGIC = b"MUGN"
FORMAT_VERSION = 1

STREAM_GEN = 101
STREAM_DISC = 102
STREAM_AE = 103
STREAM_EPOCH = 104
STREAM_AE_EPOCH = 105


class CheckpointError(ValueError):
    pass


class TrainingDiverged(FloatingPointError):
    pass


# ---------------------------------------------------------------------------
# checkpoint format
#
# magic "MUGN" | u32 format version | u32 header length | canonical JSON
# header | concatenated raw little-endian float32 arrays in header order.


@dataclass
class Checkpoint:
    kind: str  # "gan" | "autoencoder"
    step: int
    meta: dict
    arrays: dict  # name -> float32 array, order significant


def save_checkpoint(path, ck: Checkpoint) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "kind": ck.kind,
        "step": int(ck.step),
        "meta": ck.meta,
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in ck.arrays.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f4").tobytes() for a in ck.arrays.values()
    )
    blob = MAGIC + struct.pack("<II", FORMAT_VERSION, len(header_bytes)) + header_bytes + payload

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    if len(blob) < 12 or blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, header_len = struct.unpack("<II", blob[4:12])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if len(blob) < 12 + header_len:
        raise CheckpointError(f"{path}: truncated checkpoint header")
    try:
        header = json.loads(blob[12 : 12 + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint header ({exc})") from None

    offset = 12 + header_len
    expected = sum(int(np.prod(e["shape"])) * 4 for e in header["arrays"])
    if len(blob) - offset != expected:
        raise CheckpointError(
            f"{path}: truncated or corrupt checkpoint payload"
            f" ({len(blob) - offset} bytes, expected {expected})"
        )
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape)
        arrays[entry["name"]] = arr.copy()
        offset += count * 4
    return Checkpoint(kind=header["kind"], step=header["step"], meta=header["meta"], arrays=arrays)


def _arch_meta(cfg: TrainConfig) -> dict:
    return {
        "patch_len": cfg.patch_len,
        "gen_depth": cfg.gen.depth,
        "gen_base": cfg.gen.base_channels,
        "gen_max": cfg.gen.max_channels,
        "disc_depth": cfg.disc.depth,
        "disc_base": cfg.disc.base_channels,
        "disc_max": cfg.disc.max_channels,
        "ae_depth": cfg.ae.depth,
        "ae_base": cfg.ae.base_channels,
        "ae_max": cfg.ae.max_channels,
    }


def _collect(arrays: dict, prefix: str, params: dict) -> None:
    for name, p in params.items():
        arrays[f"{prefix}.{name}"] = p.data


def _restore(params: dict, arrays: dict, prefix: str, path="checkpoint") -> None:
    for name, p in params.items():
        key = f"{prefix}.{name}"
        if key not in arrays:
            raise CheckpointError(f"{path}: missing array {key} (architecture mismatch?)")
        a = arrays[key]
        if a.shape != p.data.shape:
            raise CheckpointError(
                f"{path}: array {key} has shape {a.shape}, model expects {p.data.shape}"
            )
        p.data = a.astype(np.float32, copy=True)


def _restore_adam(opt: Adam, arrays: dict, prefix: str, t: int, path="checkpoint") -> None:
    moments = {}
    for name in opt.params:
        for kind in ("m", "v"):
            key = f"{prefix}.{name}.{kind}"
            if key not in arrays:
                raise CheckpointError(f"{path}: missing optimizer array {key}")
            moments[f"{name}.{kind}"] = arrays[key]
    opt.load_state_arrays(moments, t)


# ---------------------------------------------------------------------------
# model/dataset construction


def _stream_rng(seed: int, *tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, tags)]))


def build_models(cfg: TrainConfig):
    """All three networks, each initialized from its own seed stream.

    Always builds all three so the generator init is identical across modes.
    """
    gen = Generator(cfg.gen, _stream_rng(cfg.seed, STREAM_GEN))
    disc = Discriminator(cfg.disc, _stream_rng(cfg.seed, STREAM_DISC))
    ae = Autoencoder(cfg.ae, _stream_rng(cfg.seed, STREAM_AE))
    return gen, disc, ae


def prepare_splits(cfg: TrainConfig) -> dict:
    if cfg.recipe is not None:
        clips = synth_dataset(cfg.recipe, cfg.seed)
        splits = split_clips(clips, cfg.train_frac, cfg.val_frac)
    else:
        splits = load_manifest(cfg.data_dir)
    if not splits["train"]:
        raise ValueError("dataset has no training clips")
    for split, clips in splits.items():
        for clip in clips:
            if len(clip.samples) < cfg.patch_len:
                raise ValueError(
                    f"{split} clip {clip.clip_id} has {len(clip.samples)} samples,"
                    f" shorter than patch length {cfg.patch_len}"
                )
    return splits


def _epoch_pairs(cfg: TrainConfig, train_clips, epoch: int, stream: int):
    """HR and spline-upsampled LR patch arrays for one epoch.

    A pure function of (config, epoch): clip choices and patch offsets come
    from a per-epoch seed branch, so any step can be replayed exactly.
    """
    rng = _stream_rng(cfg.seed, stream, epoch)
    n = cfg.patches_per_epoch
    x_h = np.empty((n, cfg.patch_len), dtype=np.float64)
    picks = rng.integers(0, len(train_clips), size=n)
    for j in range(n):
        samples = train_clips[picks[j]].samples
        start = int(rng.integers(0, len(samples) - cfg.patch_len + 1))
        x_h[j] = samples[start : start + cfg.patch_len]
    x_up = np.empty_like(x_h)
    for j in range(n):
        x_up[j], _ = make_pair(x_h[j], cfg.ratio)
    return x_h, x_up


def _batch_tensor(rows: np.ndarray) -> Tensor:
    return Tensor(rows[:, None, :].astype(np.float32))


class _StepLog:
    def __init__(self, path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "a")

    def write(self, **fields):
        parts = []
        for key, value in fields.items():
            if isinstance(value, float):
                parts.append(f"{key}={value:.6g}")
            else:
                parts.append(f"{key}={value}")
        self._fh.write(" ".join(parts) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()


def _set_requires_grad(params: dict, flag: bool) -> None:
    for p in params.values():
        p.requires_grad = flag


# ---------------------------------------------------------------------------
# autoencoder pretraining


def ae_checkpoint(cfg: TrainConfig, ae: Autoencoder, opt: Adam, step: int) -> Checkpoint:
    arrays = {}
    _collect(arrays, "ae", ae.parameters())
    for key, a in opt.state_arrays().items():
        arrays[f"ae_opt.{key}"] = a
    meta = {
        "seed": cfg.seed,
        "ratio": cfg.ratio,
        "mode": cfg.mode,
        "arch": _arch_meta(cfg),
        "adam_t": {"ae": opt.t},
        "rng": {"scheme": "counter", "seed": cfg.seed, "step": step},
        "config": cfg.raw,
    }
    return Checkpoint(kind="autoencoder", step=step, meta=meta, arrays=arrays)


def train_autoencoder(cfg: TrainConfig, splits: dict, out_dir) -> Path:
    """Reconstruction pretraining for the feature extractor; returns checkpoint path."""
    out_dir = Path(out_dir)
    _, _, ae = build_models(cfg)
    params = ae.parameters()
    opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)

    spe = cfg.steps_per_epoch
    total = cfg.ae_epochs * spe
    if cfg.ae_max_steps:
        total = min(total, cfg.ae_max_steps)

    log = _StepLog(out_dir / "ae_train.log")
    step = 0
    try:
        while step < total:
            epoch = step // spe
            x_h, _ = _epoch_pairs(cfg, splits["train"], epoch, STREAM_AE_EPOCH)
            for b in range(step % spe, spe):
                if step >= total:
                    break
                t0 = time.perf_counter()
                x = _batch_tensor(x_h[b * cfg.batch_size : (b + 1) * cfg.batch_size])
                try:
                    _, recon = ae.forward(x)
                    loss = l2_loss(x, recon)
                    zero_grads(params)
                    loss.backward()
                    opt.step()
                except FloatingPointError as exc:
                    raise TrainingDiverged(
                        f"autoencoder diverged at step {step}: {exc}"
                    ) from None
                step += 1
                if step % cfg.log_every == 0 or step == total:
                    log.write(step=step, epoch=epoch, loss=loss.item(), sec=time.perf_counter() - t0)
    finally:
        log.close()

    path = out_dir / "ae.mugn"
    save_checkpoint(path, ae_checkpoint(cfg, ae, opt, step))
    return path


# ---------------------------------------------------------------------------
# adversarial training


def gan_checkpoint(
    cfg: TrainConfig,
    gen: Generator,
    disc: Discriminator,
    ae: Autoencoder,
    g_opt: Adam,
    d_opt: Adam,
    step: int,
) -> Checkpoint:
    arrays = {}
    _collect(arrays, "g", gen.parameters())
    _collect(arrays, "d", disc.parameters())
    _collect(arrays, "ae", ae.parameters())
    for key, a in g_opt.state_arrays().items():
        arrays[f"g_opt.{key}"] = a
    for key, a in d_opt.state_arrays().items():
        arrays[f"d_opt.{key}"] = a
    spe = cfg.steps_per_epoch
    meta = {
        "seed": cfg.seed,
        "ratio": cfg.ratio,
        "mode": cfg.mode,
        "arch": _arch_meta(cfg),
        "adam_t": {"g": g_opt.t, "d": d_opt.t},
        "rng": {"scheme": "counter", "seed": cfg.seed, "epoch": step // spe, "batch": step % spe},
        "config": cfg.raw,
    }
    return Checkpoint(kind="gan", step=step, meta=meta, arrays=arrays)


def _check_resume_compatible(ck: Checkpoint, cfg: TrainConfig, path) -> None:
    if ck.meta.get("seed") != cfg.seed or ck.meta.get("mode") != cfg.mode or ck.meta.get("ratio") != cfg.ratio:
        raise CheckpointError(
            f"{path}: checkpoint was trained with seed/mode/ratio "
            f"{ck.meta.get('seed')}/{ck.meta.get('mode')}/{ck.meta.get('ratio')}, "
            f"config says {cfg.seed}/{cfg.mode}/{cfg.ratio}"
        )
    if ck.meta.get("arch") != _arch_meta(cfg):
        raise CheckpointError(f"{path}: checkpoint architecture does not match config")


def train_gan(
    cfg: TrainConfig,
    splits: dict,
    out_dir,
    ae_checkpoint_path=None,
    resume_path=None,
) -> Path:
    """Alternating D/G updates (one of each per batch); returns final checkpoint path.

    The autoencoder is loaded frozen from its pretraining checkpoint whenever
    the feature loss is active.  Resuming restores every parameter and
    optimizer moment and replays the batch schedule from the saved step, so
    the result is bit-identical to an uninterrupted run.
    """
    out_dir = Path(out_dir)
    weights = cfg.effective_weights()
    need_f = weights.lambda_f != 0.0
    need_adv = weights.lambda_adv != 0.0

    gen, disc, ae = build_models(cfg)
    g_params = gen.parameters()
    d_params = disc.parameters()
    g_opt = Adam(g_params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    d_opt = Adam(d_params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)

    start_step = 0
    if resume_path is not None:
        ck = load_checkpoint(resume_path)
        if ck.kind != "gan":
            raise CheckpointError(f"{resume_path}: expected a gan checkpoint, got {ck.kind}")
        _check_resume_compatible(ck, cfg, resume_path)
        _restore(g_params, ck.arrays, "g", resume_path)
        _restore(d_params, ck.arrays, "d", resume_path)
        _restore(ae.parameters(), ck.arrays, "ae", resume_path)
        _restore_adam(g_opt, ck.arrays, "g_opt", ck.meta["adam_t"]["g"], resume_path)
        _restore_adam(d_opt, ck.arrays, "d_opt", ck.meta["adam_t"]["d"], resume_path)
        start_step = ck.step
    elif need_f:
        if ae_checkpoint_path is None:
            raise ValueError("feature loss is enabled but no autoencoder checkpoint was given")
        ck = load_checkpoint(ae_checkpoint_path)
        if ck.kind != "autoencoder":
            raise CheckpointError(
                f"{ae_checkpoint_path}: expected an autoencoder checkpoint, got {ck.kind}"
            )
        _restore(ae.parameters(), ck.arrays, "ae", ae_checkpoint_path)

    # The feature extractor never trains here, in any mode.
    _set_requires_grad(ae.parameters(), False)

    spe = cfg.steps_per_epoch
    total = cfg.epochs * spe
    if cfg.max_steps:
        total = min(total, cfg.max_steps)

    log = _StepLog(out_dir / "gan_train.log")
    step = start_step
    try:
        while step < total:
            epoch = step // spe
            x_h_all, x_up_all = _epoch_pairs(cfg, splits["train"], epoch, STREAM_EPOCH)
            for b in range(step % spe, spe):
                if step >= total:
                    break
                t0 = time.perf_counter()
                rows = slice(b * cfg.batch_size, (b + 1) * cfg.batch_size)
                x_h = _batch_tensor(x_h_all[rows])
                x_up = _batch_tensor(x_up_all[rows])
                fields = {}
                try:
                    g_out = gen.forward(x_up)

                    if need_adv:
                        d_real = disc.forward(x_h)
                        d_fake = disc.forward(g_out.detach())
                        d_loss = discriminator_loss(d_real, d_fake)
                        zero_grads(d_params)
                        d_loss.backward()
                        d_opt.step()
                        fields["d_loss"] = d_loss.item()

                    phi_h = phi_g = d_of_g = None
                    if need_f:
                        phi_h = ae.encode(x_h)
                        phi_g = ae.encode(g_out)
                    if need_adv:
                        _set_requires_grad(d_params, False)
                    try:
                        d_of_g = disc.forward(g_out) if need_adv else None
                        g_loss = generator_loss(x_h, g_out, phi_h, phi_g, d_of_g, weights)
                        zero_grads(g_params)
                        g_loss.backward()
                    finally:
                        if need_adv:
                            _set_requires_grad(d_params, True)
                    g_opt.step()
                    fields["g_loss"] = g_loss.item()
                except FloatingPointError as exc:
                    raise TrainingDiverged(f"gan training diverged at step {step}: {exc}") from None

                step += 1
                if step % cfg.log_every == 0 or step == total:
                    log.write(step=step, epoch=epoch, **fields, sec=time.perf_counter() - t0)
                if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step < total:
                    save_checkpoint(
                        out_dir / f"gan_step{step:07d}.mugn",
                        gan_checkpoint(cfg, gen, disc, ae, g_opt, d_opt, step),
                    )
    finally:
        log.close()

    path = out_dir / "gan.mugn"
    save_checkpoint(path, gan_checkpoint(cfg, gen, disc, ae, g_opt, d_opt, step))
    return path


# ---------------------------------------------------------------------------
# inference and evaluation


def generator_from_checkpoint(ck: Checkpoint) -> Generator:
    arch = ck.meta["arch"]
    spec = GeneratorSpec(
        depth=arch["gen_depth"],
        base_channels=arch["gen_base"],
        max_channels=arch["gen_max"],
        patch_len=arch["patch_len"],
    )
    gen = Generator(spec, np.random.default_rng(0))
    _restore(gen.parameters(), ck.arrays, "g")
    return gen


def infer(gen: Generator, lr_samples, ratio: int) -> np.ndarray:
    """Upsample a whole clip: spline, overlapped windows through G, cross-fade.

    Windows overlap 50% and are blended with linear ramps; output length is
    exactly ratio * len(lr_samples).
    """
    x_up = spline_upsample(lr_samples, ratio)
    patch = gen.spec.patch_len
    n = len(x_up)
    if n < patch:
        raise ValueError(f"clip gives {n} upsampled samples, shorter than one {patch}-sample window")

    starts = list(range(0, n - patch + 1, patch // 2))
    if starts[-1] != n - patch:
        starts.append(n - patch)
    windows = np.stack([x_up[s : s + patch] for s in starts]).astype(np.float32)[:, None, :]

    g_params = gen.parameters()
    _set_requires_grad(g_params, False)
    try:
        outputs = []
        for i in range(0, len(starts), 32):
            outputs.append(gen.forward(Tensor(windows[i : i + 32])).data[:, 0, :])
    finally:
        _set_requires_grad(g_params, True)
    rendered = np.concatenate(outputs, axis=0)

    out = np.zeros(n, dtype=np.float32)
    covered = 0
    for start, window in zip(starts, rendered):
        end = start + patch
        overlap = covered - start
        if overlap > 0:
            ramp = (np.arange(overlap) / overlap).astype(np.float32)
            out[start:covered] = out[start:covered] * (1.0 - ramp) + window[:overlap] * ramp
            out[covered:end] = window[overlap:]
        else:
            out[start:end] = window
        covered = end
    return out


def evaluate_model(gen: Generator, clips, ratio: int):
    """Model vs spline baseline on full clips; list of per-clip metric reports."""
    reports = []
    for clip in clips:
        usable = len(clip.samples) - len(clip.samples) % ratio
        x_h = clip.samples[:usable]
        low = decimate(lowpass_fir(x_h, 1.0 / ratio), ratio)
        baseline = spline_upsample(low, ratio)
        sr = infer(gen, low, ratio)
        reports.append(evaluate_clip(sr.astype(np.float64), x_h, baseline, clip_id=clip.clip_id))
    return reports
