"""The three networks: U-net generator, discriminator, and the skip-free
convolutional autoencoder whose bottleneck defines the feature loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, add, conv1d, dense, flatten, leaky_relu, sigmoid
from .layers import BlockParams, d_block, init_block, init_multiscale, multiscale_conv, subpixel, u_block

__all__ = [
    "channel_schedule",
    "GeneratorSpec",
    "Generator",
    "DiscriminatorSpec",
    "Discriminator",
    "AutoencoderSpec",
    "Autoencoder",
]

FINAL_CONV_WIDTH = 9


def channel_schedule(base: int, cap: int, depth: int) -> list:
    """Per-level conv output channels: doubling from ``base``, clipped at ``cap``."""
    return [min(cap, base * 2**b) for b in range(depth)]


def _validate_channels(name: str, base: int, cap: int, depth: int) -> None:
    if depth < 1:
        raise ValueError(f"{name}: depth must be >= 1, got {depth}")
    if base % 4 != 0 or base < 4:
        raise ValueError(f"{name}: base channels must be a positive multiple of 4, got {base}")
    if cap % 4 != 0 or cap < base:
        raise ValueError(f"{name}: max channels must be a multiple of 4 and >= base, got {cap}")


def _zero_conv(out_ch: int, in_ch: int, width: int):
    kernel = Tensor(np.zeros((out_ch, in_ch, width), dtype=np.float32), requires_grad=True)
    bias = Tensor(np.zeros(out_ch, dtype=np.float32), requires_grad=True)
    return kernel, bias


# ---------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class GeneratorSpec:
    depth: int = 2
    base_channels: int = 16
    max_channels: int = 128
    patch_len: int = 8192

    def __post_init__(self):
        _validate_channels("generator", self.base_channels, self.max_channels, self.depth)
        if self.patch_len % 2**self.depth != 0 or self.patch_len < 2**self.depth:
            raise ValueError(
                f"generator: patch length {self.patch_len} not divisible by 2^{self.depth}"
            )

    @property
    def channels(self) -> list:
        return channel_schedule(self.base_channels, self.max_channels, self.depth)


class Generator:
    """U-net over the spline-upsampled input.

    Down path: depth D-blocks.  Up path mirrors it with stacking skips — the
    U-block working at level b concatenates whatever the level-b D-block
    consumed (the raw input for b = 0).  A final width-9 convolution produces
    a residual that is added back onto the input, and that conv starts at
    zero so an untrained model is exactly the identity.
    """

    def __init__(self, spec: GeneratorSpec, rng: np.random.Generator):
        self.spec = spec
        ch = spec.channels
        depth = spec.depth

        self.down = []
        for b in range(depth):
            in_ch = 1 if b == 0 else 2 * ch[b - 1]
            self.down.append(init_block(in_ch, ch[b], rng))

        self.up = []
        for b in range(depth):
            if b == depth - 1:
                in_ch = 2 * ch[depth - 1]
            else:
                # previous U-block's output: its conv channels plus the level-(b+1) skip
                in_ch = ch[b + 1] + 2 * ch[b]
            self.up.append(init_block(in_ch, 2 * ch[b], rng))

        self.final_kernel, self.final_bias = _zero_conv(1, ch[0] + 1, FINAL_CONV_WIDTH)

    def parameters(self) -> dict:
        out = {}
        for b, block in enumerate(self.down):
            out.update(block.named(f"down{b}"))
        for b, block in enumerate(self.up):
            out.update(block.named(f"up{b}"))
        out["final.w"] = self.final_kernel
        out["final.b"] = self.final_bias
        return out

    def forward(self, x_up: Tensor) -> Tensor:
        if x_up.ndim != 3 or x_up.shape[1] != 1:
            raise ValueError(f"generator expects (batch, 1, time), got {x_up.shape}")
        if x_up.shape[2] % 2**self.spec.depth != 0:
            raise ValueError(
                f"time length {x_up.shape[2]} not divisible by 2^{self.spec.depth}"
            )
        skips = [x_up]
        h = x_up
        for block in self.down:
            h = d_block(h, block)
            skips.append(h)
        for b in reversed(range(self.spec.depth)):
            h = u_block(h, skips[b], self.up[b])
        residual = conv1d(h, self.final_kernel, self.final_bias)
        return add(x_up, residual)


# ---------------------------------------------------------------------------
# discriminator


@dataclass(frozen=True)
class DiscriminatorSpec:
    input_len: int
    depth: int = 2
    base_channels: int = 8
    max_channels: int = 128
    alpha: float = 0.2

    def __post_init__(self):
        _validate_channels("discriminator", self.base_channels, self.max_channels, self.depth)
        if self.input_len % 2**self.depth != 0 or self.input_len < 2**self.depth:
            raise ValueError(
                f"discriminator: input length {self.input_len} not divisible by 2^{self.depth}"
            )

    @property
    def channels(self) -> list:
        return channel_schedule(self.base_channels, self.max_channels, self.depth)

    @property
    def head_features(self) -> int:
        return 2 * self.channels[-1] * (self.input_len // 2**self.depth)


class Discriminator:
    """Stack of LeakyReLU D-blocks, flattened into a single sigmoid unit."""

    def __init__(self, spec: DiscriminatorSpec, rng: np.random.Generator):
        self.spec = spec
        ch = spec.channels
        self.blocks = []
        for b in range(spec.depth):
            in_ch = 1 if b == 0 else 2 * ch[b - 1]
            self.blocks.append(init_block(in_ch, ch[b], rng, alpha=spec.alpha))
        feat = spec.head_features
        std = np.sqrt(2.0 / feat)
        self.dense_w = Tensor(rng.normal(0.0, std, size=(1, feat)).astype(np.float32), requires_grad=True)
        self.dense_b = Tensor(np.zeros(1, dtype=np.float32), requires_grad=True)

    def parameters(self) -> dict:
        out = {}
        for b, block in enumerate(self.blocks):
            out.update(block.named(f"block{b}"))
        out["head.w"] = self.dense_w
        out["head.b"] = self.dense_b
        return out

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.spec.input_len:
            raise ValueError(
                f"discriminator expects (batch, 1, {self.spec.input_len}), got {x.shape}"
            )
        h = x
        for block in self.blocks:
            h = d_block(h, block)
        return sigmoid(dense(flatten(h), self.dense_w, self.dense_b))


# ---------------------------------------------------------------------------
# autoencoder


@dataclass(frozen=True)
class AutoencoderSpec:
    depth: int = 4
    base_channels: int = 8
    max_channels: int = 64

    def __post_init__(self):
        _validate_channels("autoencoder", self.base_channels, self.max_channels, self.depth)

    @property
    def channels(self) -> list:
        return channel_schedule(self.base_channels, self.max_channels, self.depth)


class Autoencoder:
    """Mirror of the generator with every skip removed.

    The encoder output (bottleneck) is the feature tensor the feature loss
    compares; the decoder exists so the bottleneck can be trained to carry
    enough information to reconstruct the input.
    """

    def __init__(self, spec: AutoencoderSpec, rng: np.random.Generator):
        self.spec = spec
        ch = spec.channels
        depth = spec.depth

        self.enc = []
        for b in range(depth):
            in_ch = 1 if b == 0 else 2 * ch[b - 1]
            self.enc.append(init_block(in_ch, ch[b], rng))

        self.dec = []
        for b in range(depth):
            in_ch = 2 * ch[depth - 1] if b == depth - 1 else ch[b + 1]
            self.dec.append(init_block(in_ch, 2 * ch[b], rng))

        std = np.sqrt(2.0 / (ch[0] * FINAL_CONV_WIDTH))
        kernel = rng.normal(0.0, std, size=(1, ch[0], FINAL_CONV_WIDTH)).astype(np.float32)
        self.final_kernel = Tensor(kernel, requires_grad=True)
        self.final_bias = Tensor(np.zeros(1, dtype=np.float32), requires_grad=True)

    def parameters(self) -> dict:
        out = {}
        for b, block in enumerate(self.enc):
            out.update(block.named(f"enc{b}"))
        for b, block in enumerate(self.dec):
            out.update(block.named(f"dec{b}"))
        out["final.w"] = self.final_kernel
        out["final.b"] = self.final_bias
        return out

    def encode(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] != 1:
            raise ValueError(f"autoencoder expects (batch, 1, time), got {x.shape}")
        if x.shape[2] % 2**self.spec.depth != 0:
            raise ValueError(
                f"time length {x.shape[2]} not divisible by 2^{self.spec.depth}"
            )
        h = x
        for block in self.enc:
            h = d_block(h, block)
        return h

    def forward(self, x: Tensor):
        phi = self.encode(x)
        h = phi
        for b in reversed(range(self.spec.depth)):
            block = self.dec[b]
            h = subpixel(leaky_relu(multiscale_conv(h, block.conv), block.alpha), block.factor)
        reconstruction = conv1d(h, self.final_kernel, self.final_bias)
        return phi, reconstruction
