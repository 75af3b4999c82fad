"""Dataset construction: WAV I/O, the synthetic corpus used for desk-scale
experiments, low/high-resolution pair preparation, and patch sampling.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dsp

__all__ = [
    "AudioClip",
    "read_wav",
    "write_wav",
    "SynthRecipe",
    "synth_clip",
    "synth_dataset",
    "make_pair",
    "sample_patches",
    "split_clips",
    "write_manifest",
    "load_manifest",
]

PCM_SCALE = 32768.0

# Stream tags keep every random draw in the project on its own SeedSequence
# branch; nothing shares a bit stream just because it shares the user seed.
STREAM_CLIP = 201
STREAM_PATCH = 202


@dataclass
class AudioClip:
    samples: np.ndarray  # float64 mono in [-1, 1]
    sample_rate: int
    clip_id: str = "clip"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"clip samples must be 1-D, got shape {self.samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")


def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM WAV file; stereo is downmixed by channel averaging."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as f:
            if f.getcomptype() != "NONE":
                raise ValueError(f"{path}: compressed WAV ({f.getcomptype()}) not supported")
            if f.getsampwidth() != 2:
                raise ValueError(f"{path}: only 16-bit PCM supported, got {8 * f.getsampwidth()}-bit")
            channels = f.getnchannels()
            if channels not in (1, 2):
                raise ValueError(f"{path}: expected mono or stereo, got {channels} channels")
            rate = f.getframerate()
            raw = f.readframes(f.getnframes())
    except (wave.Error, EOFError) as exc:
        raise ValueError(f"{path}: malformed WAV file ({exc})") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return AudioClip(samples, rate, clip_id=path.stem)


def write_wav(path, samples, sample_rate: int) -> None:
    """Write mono 16-bit PCM with saturating rounding."""
    samples = np.asarray(samples, dtype=np.float64)
    quantized = np.clip(np.rint(samples * PCM_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(2)
        f.setframerate(int(sample_rate))
        f.writeframes(quantized.tobytes())


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class SynthRecipe:
    """Harmonic tone clips: a fixed waveshape at a random pitch and offset.

    Each clip is sum_k decay^(k-1) * sin(k * (2*pi*f0*t + phase)) for
    k = 1..harmonics, with partials at or above ``freq_cap`` of Nyquist
    dropped, peak-normalized, plus an optional white-noise floor.  Coupling
    every partial's phase to the fundamental keeps the high band a
    deterministic function of the low band, which is what makes the
    super-resolution task learnable at desk scale.
    """

    num_clips: int = 24
    clip_len: int = 16384
    sample_rate: int = 16000
    harmonics: int = 8
    f0_lo: float = 700.0
    f0_hi: float = 1100.0
    amp_decay: float = 0.75
    noise_amp: float = 1e-4
    freq_cap: float = 0.95
    peak: float = 0.5

    def __post_init__(self):
        nyquist = self.sample_rate / 2.0
        if self.num_clips < 1:
            raise ValueError("recipe needs at least one clip")
        if self.clip_len < 16:
            raise ValueError(f"clip length {self.clip_len} too short")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        if self.harmonics < 1:
            raise ValueError("need at least one partial")
        if not 0.0 < self.f0_lo <= self.f0_hi:
            raise ValueError(f"bad fundamental range [{self.f0_lo}, {self.f0_hi}]")
        if not 0.0 < self.freq_cap <= 1.0:
            raise ValueError(f"frequency cap must be in (0, 1], got {self.freq_cap}")
        if self.f0_hi >= self.freq_cap * nyquist:
            raise ValueError(f"fundamental range exceeds {self.freq_cap} of Nyquist")
        if not 0.0 < self.amp_decay <= 1.0:
            raise ValueError(f"amplitude decay must be in (0, 1], got {self.amp_decay}")
        if self.noise_amp < 0.0:
            raise ValueError("noise amplitude must be nonnegative")
        if self.peak <= 0.0:
            raise ValueError("peak must be positive")


def synth_clip(recipe: SynthRecipe, rng: np.random.Generator, clip_id: str) -> AudioClip:
    f0 = float(rng.uniform(recipe.f0_lo, recipe.f0_hi))
    phase = float(rng.uniform(0.0, 2.0 * np.pi))
    t = np.arange(recipe.clip_len) / recipe.sample_rate
    limit = recipe.freq_cap * recipe.sample_rate / 2.0
    x = np.zeros(recipe.clip_len)
    amps = []
    for k in range(1, recipe.harmonics + 1):
        amp = recipe.amp_decay ** (k - 1) if k * f0 < limit else 0.0
        amps.append(amp)
        if amp:
            x += amp * np.sin(k * (2.0 * np.pi * f0 * t + phase))
    scale = recipe.peak / np.abs(x).max()
    x *= scale
    if recipe.noise_amp:
        x += recipe.noise_amp * rng.standard_normal(recipe.clip_len)
    meta = {"f0": f0, "phase": phase, "scale": scale, "amps": tuple(amps)}
    return AudioClip(x, recipe.sample_rate, clip_id=clip_id, meta=meta)


def synth_dataset(recipe: SynthRecipe, seed: int) -> list:
    """Deterministic clip collection; clip i depends only on (seed, i)."""
    clips = []
    for i in range(recipe.num_clips):
        rng = np.random.default_rng(np.random.SeedSequence([seed, STREAM_CLIP, i]))
        clips.append(synth_clip(recipe, rng, clip_id=f"synth{i:04d}"))
    return clips


# ---------------------------------------------------------------------------
# pairs, patches, splits


def make_pair(x_h, r: int):
    """HR patch -> (spline-upsampled LR version, HR): lowpass, decimate, spline."""
    x_h = np.asarray(x_h, dtype=np.float64)
    r = int(r)
    if r < 2:
        raise ValueError(f"ratio must be >= 2, got {r}")
    if len(x_h) % r != 0:
        raise ValueError(f"length {len(x_h)} not divisible by ratio {r}")
    low = dsp.decimate(dsp.lowpass_fir(x_h, 1.0 / r), r)
    return dsp.spline_upsample(low, r), x_h


def sample_patches(samples, patch_len: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random fixed-length windows; (count, patch_len) array."""
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < patch_len:
        raise ValueError(f"clip of {len(samples)} samples shorter than patch {patch_len}")
    starts = rng.integers(0, len(samples) - patch_len + 1, size=count)
    return np.stack([samples[s : s + patch_len] for s in starts])


def split_clips(clips, train_frac: float, val_frac: float) -> dict:
    """Deterministic split by clip index; clips never straddle splits."""
    if train_frac < 0 or val_frac < 0 or train_frac + val_frac > 1.0 + 1e-9:
        raise ValueError(f"bad split fractions {train_frac}/{val_frac}")
    n = len(clips)
    n_train = int(n * train_frac)
    n_val = int(n * val_frac)
    return {
        "train": list(clips[:n_train]),
        "val": list(clips[n_train : n_train + n_val]),
        "test": list(clips[n_train + n_val :]),
    }


# ---------------------------------------------------------------------------
# on-disk datasets


def write_manifest(out_dir, splits: dict) -> Path:
    """Materialize clips as WAVs plus a key=value manifest; returns its path."""
    out_dir = Path(out_dir)
    (out_dir / "clips").mkdir(parents=True, exist_ok=True)
    lines = []
    for split in ("train", "val", "test"):
        for clip in splits.get(split, []):
            rel = f"clips/{clip.clip_id}.wav"
            write_wav(out_dir / rel, clip.samples, clip.sample_rate)
            line = f"clip={clip.clip_id} split={split} path={rel} sample_rate={clip.sample_rate}"
            if "f0" in clip.meta:
                line += f" f0={clip.meta['f0']:.6f}"
            lines.append(line)
    manifest = out_dir / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def load_manifest(manifest_path) -> dict:
    """Read a manifest written by write_manifest back into split lists."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.txt"
    if not manifest_path.is_file():
        raise ValueError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    splits = {"train": [], "val": [], "test": []}
    for lineno, line in enumerate(manifest_path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = dict(part.split("=", 1) for part in line.split() if "=" in part)
        try:
            split = fields["split"]
            clip = read_wav(base / fields["path"])
            clip.clip_id = fields["clip"]
        except KeyError as exc:
            raise ValueError(f"{manifest_path}:{lineno}: missing field {exc}") from None
        if split not in splits:
            raise ValueError(f"{manifest_path}:{lineno}: unknown split {split!r}")
        splits[split].append(clip)
    return splits
