"""Architectural building blocks: time/channel shuffles, multiscale
convolutions, and the down/up block compositions they form.

Shapes follow the (batch, channels, time) convention throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, concat_channels, conv1d, leaky_relu, _accumulate, _make

__all__ = [
    "FILTER_WIDTHS",
    "superpixel",
    "subpixel",
    "MultiscaleParams",
    "init_multiscale",
    "multiscale_conv",
    "BlockParams",
    "init_block",
    "d_block",
    "u_block",
]

FILTER_WIDTHS = (3, 9, 27, 81)


def superpixel(x: Tensor, r: int) -> Tensor:
    """Interleave time into channels: (B, C, T) -> (B, C*r, T/r).

    Phase-major ordering: output channel c*r + j at time t is input channel c
    at time t*r + j.  Pure permutation, so the gradient is the inverse
    permutation and values round-trip bit-exactly through subpixel.
    """
    if x.ndim != 3:
        raise ValueError(f"superpixel expects (batch, channels, time), got {x.shape}")
    r = int(r)
    if r < 1:
        raise ValueError(f"shuffle factor must be >= 1, got {r}")
    b, c, t = x.shape
    if t % r != 0:
        raise ValueError(f"time length {t} not divisible by shuffle factor {r}")
    y = x.data.reshape(b, c, t // r, r).transpose(0, 1, 3, 2).reshape(b, c * r, t // r)

    def backward(g):
        _accumulate(x, g.reshape(b, c, r, t // r).transpose(0, 1, 3, 2).reshape(b, c, t))

    return _make(np.ascontiguousarray(y), (x,), backward, "superpixel")


def subpixel(x: Tensor, r: int) -> Tensor:
    """Inverse of superpixel: (B, C, T) -> (B, C/r, T*r)."""
    if x.ndim != 3:
        raise ValueError(f"subpixel expects (batch, channels, time), got {x.shape}")
    r = int(r)
    if r < 1:
        raise ValueError(f"shuffle factor must be >= 1, got {r}")
    b, c, t = x.shape
    if c % r != 0:
        raise ValueError(f"channel count {c} not divisible by shuffle factor {r}")
    y = x.data.reshape(b, c // r, r, t).transpose(0, 1, 3, 2).reshape(b, c // r, t * r)

    def backward(g):
        _accumulate(x, g.reshape(b, c // r, t, r).transpose(0, 1, 3, 2).reshape(b, c, t))

    return _make(np.ascontiguousarray(y), (x,), backward, "subpixel")


@dataclass
class MultiscaleParams:
    """Four parallel filter banks, widths 3/9/27/81, equal channel split."""

    kernels: list  # Tensor (out_ch/4, in_ch, width) per branch
    biases: list  # Tensor (out_ch/4,) per branch

    @property
    def in_channels(self) -> int:
        return self.kernels[0].shape[1]

    @property
    def out_channels(self) -> int:
        return 4 * self.kernels[0].shape[0]

    def named(self, prefix: str):
        for width, kernel, bias in zip(FILTER_WIDTHS, self.kernels, self.biases):
            yield f"{prefix}.w{width}", kernel
            yield f"{prefix}.b{width}", bias


def init_multiscale(in_ch: int, out_ch: int, rng: np.random.Generator) -> MultiscaleParams:
    """He-scaled normal kernels, zero biases."""
    if out_ch % 4 != 0:
        raise ValueError(f"multiscale output channels must divide by 4, got {out_ch}")
    branch = out_ch // 4
    kernels, biases = [], []
    for width in FILTER_WIDTHS:
        std = np.sqrt(2.0 / (in_ch * width))
        k = rng.normal(0.0, std, size=(branch, in_ch, width)).astype(np.float32)
        kernels.append(Tensor(k, requires_grad=True))
        biases.append(Tensor(np.zeros(branch, dtype=np.float32), requires_grad=True))
    return MultiscaleParams(kernels, biases)


def multiscale_conv(x: Tensor, p: MultiscaleParams, stride: int = 1) -> Tensor:
    """Four same-padded convolutions concatenated in width order 3, 9, 27, 81."""
    if x.shape[1] != p.in_channels:
        raise ValueError(f"input has {x.shape[1]} channels, filters expect {p.in_channels}")
    out = None
    for kernel, bias in zip(p.kernels, p.biases):
        branch = conv1d(x, kernel, bias, stride=stride)
        out = branch if out is None else concat_channels(out, branch)
    return out


@dataclass
class BlockParams:
    conv: MultiscaleParams
    alpha: float = 0.0  # 0 -> ReLU, 0.2 -> discriminator LeakyReLU
    factor: int = 2

    def named(self, prefix: str):
        yield from self.conv.named(prefix)


def init_block(in_ch: int, out_ch: int, rng: np.random.Generator, alpha: float = 0.0) -> BlockParams:
    return BlockParams(init_multiscale(in_ch, out_ch, rng), alpha=alpha)


def d_block(x: Tensor, p: BlockParams) -> Tensor:
    """conv -> superpixel(2) -> activation; halves time, doubles conv channels."""
    y = superpixel(multiscale_conv(x, p.conv), p.factor)
    return leaky_relu(y, p.alpha)


def u_block(x: Tensor, skip: Tensor, p: BlockParams) -> Tensor:
    """conv -> activation -> subpixel(2) -> stack skip channels."""
    y = subpixel(leaky_relu(multiscale_conv(x, p.conv), p.alpha), p.factor)
    if skip.shape[0] != y.shape[0] or skip.shape[2] != y.shape[2]:
        raise ValueError(f"skip shape {skip.shape} does not line up with {y.shape}")
    return concat_channels(y, skip)
