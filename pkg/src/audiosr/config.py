"""Plain-text key=value configuration.

One `key = value` pair per line, `#` comments, flat dotted keys.  Files are
parsed as strings; :func:`build_train_config` applies types, defaults, and
cross-field validation, and rejects keys it does not recognize so typos fail
loudly before any data is touched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .data import SynthRecipe
from .losses import LossWeights
from .models import AutoencoderSpec, DiscriminatorSpec, GeneratorSpec

__all__ = [
    "ConfigError",
    "parse_kv",
    "format_kv",
    "TrainConfig",
    "build_train_config",
    "load_train_config",
    "MODES",
    "RATIOS",
]

MODES = ("l2", "l2+f", "l2+f+adv")
RATIOS = (2, 4, 6)


class ConfigError(ValueError):
    pass


def parse_kv(text: str, source: str = "config") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def format_kv(values: dict) -> str:
    return "".join(f"{key} = {value}\n" for key, value in values.items())


_REQUIRED = object()


class _Reader:
    """Typed access over raw string values, tracking which keys were used."""

    def __init__(self, values: dict, source: str):
        self.values = dict(values)
        self.source = source
        self.used = set()

    def _fetch(self, key, default, convert, kind):
        if key not in self.values:
            if default is _REQUIRED:
                raise ConfigError(f"{self.source}: missing required key {key!r}")
            return default
        self.used.add(key)
        raw = self.values[key]
        try:
            return convert(raw)
        except (ValueError, TypeError):
            raise ConfigError(f"{self.source}: key {key!r}: expected {kind}, got {raw!r}") from None

    def get_str(self, key, default=_REQUIRED):
        return self._fetch(key, default, str, "string")

    def get_int(self, key, default=_REQUIRED):
        return self._fetch(key, default, int, "integer")

    def get_float(self, key, default=_REQUIRED):
        return self._fetch(key, default, float, "number")

    def reject_unknown(self):
        extra = sorted(set(self.values) - self.used)
        if extra:
            raise ConfigError(f"{self.source}: unknown keys: {', '.join(extra)}")


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    ratio: int
    mode: str
    gen: GeneratorSpec
    disc: DiscriminatorSpec
    ae: AutoencoderSpec
    weights: LossWeights
    recipe: SynthRecipe | None
    data_dir: str | None
    patch_len: int
    patches_per_epoch: int
    train_frac: float
    val_frac: float
    batch_size: int
    epochs: int
    max_steps: int
    ae_epochs: int
    ae_max_steps: int
    lr: float
    beta1: float
    beta2: float
    eps: float
    checkpoint_every: int
    log_every: int
    raw: dict = field(default_factory=dict, compare=False)

    def effective_weights(self) -> LossWeights:
        """Loss weights after mode gating; disabled terms drop to exactly 0."""
        return LossWeights(
            lambda_f=self.weights.lambda_f if "f" in self.mode.split("+") else 0.0,
            lambda_adv=self.weights.lambda_adv if "adv" in self.mode.split("+") else 0.0,
        )

    @property
    def steps_per_epoch(self) -> int:
        return self.patches_per_epoch // self.batch_size


def build_train_config(values: dict, source: str = "config") -> TrainConfig:
    reader = _Reader(values, source)
    seed = reader.get_int("seed", 0)
    ratio = reader.get_int("ratio", 2)
    if ratio not in RATIOS:
        raise ConfigError(f"{source}: ratio must be one of {RATIOS}, got {ratio}")
    mode = reader.get_str("mode", "l2+f+adv")
    if mode not in MODES:
        raise ConfigError(f"{source}: mode must be one of {MODES}, got {mode!r}")

    source_kind = reader.get_str("data.source", "synthetic")
    if source_kind not in ("synthetic", "dir"):
        raise ConfigError(f"{source}: data.source must be 'synthetic' or 'dir', got {source_kind!r}")
    data_dir = reader.get_str("data.dir", None)
    if source_kind == "dir" and not data_dir:
        raise ConfigError(f"{source}: data.source = dir requires data.dir")

    patch_len = reader.get_int("data.patch_len", 8192)
    patches_per_epoch = reader.get_int("data.patches_per_epoch", 512)
    train_frac = reader.get_float("data.train_frac", 0.75)
    val_frac = reader.get_float("data.val_frac", 0.125)

    recipe = None
    if source_kind == "synthetic":
        try:
            recipe = SynthRecipe(
                num_clips=reader.get_int("synth.num_clips", 24),
                clip_len=reader.get_int("synth.clip_len", 16384),
                sample_rate=reader.get_int("synth.sample_rate", 16000),
                harmonics=reader.get_int("synth.harmonics", 8),
                f0_lo=reader.get_float("synth.f0_lo", 700.0),
                f0_hi=reader.get_float("synth.f0_hi", 1100.0),
                amp_decay=reader.get_float("synth.amp_decay", 0.75),
                noise_amp=reader.get_float("synth.noise_amp", 1e-4),
                freq_cap=reader.get_float("synth.freq_cap", 0.95),
                peak=reader.get_float("synth.peak", 0.5),
            )
        except ValueError as exc:
            raise ConfigError(f"{source}: {exc}") from None

    try:
        gen = GeneratorSpec(
            depth=reader.get_int("gen.depth", 2),
            base_channels=reader.get_int("gen.base_channels", 16),
            max_channels=reader.get_int("gen.max_channels", 128),
            patch_len=patch_len,
        )
        disc = DiscriminatorSpec(
            input_len=patch_len,
            depth=reader.get_int("disc.depth", 2),
            base_channels=reader.get_int("disc.base_channels", 8),
            max_channels=reader.get_int("disc.max_channels", 128),
        )
        ae = AutoencoderSpec(
            depth=reader.get_int("ae.depth", 4),
            base_channels=reader.get_int("ae.base_channels", 8),
            max_channels=reader.get_int("ae.max_channels", 64),
        )
        weights = LossWeights(
            lambda_f=reader.get_float("loss.lambda_f", 1.0),
            lambda_adv=reader.get_float("loss.lambda_adv", 0.001),
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None

    if patch_len % ratio != 0:
        raise ConfigError(f"{source}: patch length {patch_len} not divisible by ratio {ratio}")
    if patch_len % 2**ae.depth != 0:
        raise ConfigError(f"{source}: patch length {patch_len} not divisible by 2^{ae.depth} (autoencoder)")

    batch_size = reader.get_int("train.batch_size", 32)
    if batch_size < 1:
        raise ConfigError(f"{source}: batch size must be positive")
    if patches_per_epoch < batch_size:
        raise ConfigError(f"{source}: patches_per_epoch {patches_per_epoch} < batch size {batch_size}")

    cfg = TrainConfig(
        seed=seed,
        ratio=ratio,
        mode=mode,
        gen=gen,
        disc=disc,
        ae=ae,
        weights=weights,
        recipe=recipe,
        data_dir=data_dir,
        patch_len=patch_len,
        patches_per_epoch=patches_per_epoch,
        train_frac=train_frac,
        val_frac=val_frac,
        batch_size=batch_size,
        epochs=reader.get_int("train.epochs", 150),
        max_steps=reader.get_int("train.max_steps", 0),
        ae_epochs=reader.get_int("ae_train.epochs", 400),
        ae_max_steps=reader.get_int("ae_train.max_steps", 0),
        lr=reader.get_float("adam.lr", 1e-4),
        beta1=reader.get_float("adam.beta1", 0.9),
        beta2=reader.get_float("adam.beta2", 0.999),
        eps=reader.get_float("adam.eps", 1e-8),
        checkpoint_every=reader.get_int("train.checkpoint_every", 0),
        log_every=reader.get_int("train.log_every", 50),
        raw=dict(values),
    )
    if cfg.epochs < 0 or cfg.max_steps < 0 or cfg.ae_epochs < 0 or cfg.ae_max_steps < 0:
        raise ConfigError(f"{source}: epoch and step counts must be nonnegative")
    if cfg.lr <= 0 or not 0 <= cfg.beta1 < 1 or not 0 <= cfg.beta2 < 1 or cfg.eps <= 0:
        raise ConfigError(f"{source}: bad optimizer hyperparameters")
    if not 0 <= train_frac <= 1 or not 0 <= val_frac <= 1 or train_frac + val_frac > 1:
        raise ConfigError(f"{source}: bad split fractions {train_frac}/{val_frac}")
    reader.reject_unknown()
    return cfg


def load_train_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Config file plus flag overrides; overrides win."""
    values = {}
    source = "defaults"
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values = parse_kv(path.read_text(), source=str(path))
        source = str(path)
    for key, value in (overrides or {}).items():
        values[key] = str(value)
    return build_train_config(values, source=source)
