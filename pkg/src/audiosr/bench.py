"""Timing comparison between shuffle-based downsampling and a strided-conv
variant of the same generator.

The strided variant replaces each D-block's conv + superpixel with a single
stride-2 convolution producing twice the channels, which keeps every
intermediate shape and the multiply count identical (it does carry 2x the
kernel parameters per down block).  Informational only — numbers depend
entirely on the host.
"""

from __future__ import annotations

import time

import numpy as np

from .autodiff import Adam, Tensor, add, conv1d, leaky_relu, zero_grads
from .config import TrainConfig
from .layers import init_block, multiscale_conv, u_block
from .losses import l2_loss
from .models import FINAL_CONV_WIDTH, Generator, GeneratorSpec, _zero_conv
from .training import STREAM_GEN, _stream_rng

__all__ = ["StridedGenerator", "bench_superpixel"]


class StridedGenerator:
    """Same U-net as Generator, but the down path halves time via stride."""

    def __init__(self, spec: GeneratorSpec, rng: np.random.Generator):
        self.spec = spec
        ch = spec.channels
        depth = spec.depth
        self.down = []
        for b in range(depth):
            in_ch = 1 if b == 0 else 2 * ch[b - 1]
            self.down.append(init_block(in_ch, 2 * ch[b], rng))
        self.up = []
        for b in range(depth):
            in_ch = 2 * ch[depth - 1] if b == depth - 1 else ch[b + 1] + 2 * ch[b]
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
        skips = [x_up]
        h = x_up
        for block in self.down:
            h = leaky_relu(multiscale_conv(h, block.conv, stride=2), block.alpha)
            skips.append(h)
        for b in reversed(range(self.spec.depth)):
            h = u_block(h, skips[b], self.up[b])
        return add(x_up, conv1d(h, self.final_kernel, self.final_bias))


def _time_variant(model, params, x_up, x_h, cfg: TrainConfig, steps: int, warmup: int):
    opt = Adam(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    times = []
    for i in range(warmup + steps):
        t0 = time.perf_counter()
        loss = l2_loss(x_h, model.forward(x_up))
        zero_grads(params)
        loss.backward()
        opt.step()
        if i >= warmup:
            times.append((time.perf_counter() - t0) * 1000.0)
    return np.array(times)


def bench_superpixel(cfg: TrainConfig, steps: int = 20, warmup: int = 3) -> str:
    """Per-step training timings for both variants, as a printable report."""
    rng = _stream_rng(cfg.seed, STREAM_GEN)
    x_up = Tensor(rng.standard_normal((cfg.batch_size, 1, cfg.patch_len)).astype(np.float32))
    x_h = Tensor(rng.standard_normal((cfg.batch_size, 1, cfg.patch_len)).astype(np.float32))

    shuffle_model = Generator(cfg.gen, _stream_rng(cfg.seed, STREAM_GEN))
    strided_model = StridedGenerator(cfg.gen, _stream_rng(cfg.seed, STREAM_GEN))

    lines = [
        f"bench-superpixel: depth={cfg.gen.depth} base_channels={cfg.gen.base_channels}"
        f" patch_len={cfg.patch_len} batch={cfg.batch_size} steps={steps}"
    ]
    results = {}
    for name, model in (("superpixel", shuffle_model), ("strided_conv", strided_model)):
        times = _time_variant(model, model.parameters(), x_up, x_h, cfg, steps, warmup)
        results[name] = times.mean()
        lines.append(f"variant={name} mean_ms={times.mean():.3f} std_ms={times.std():.3f}")
    faster, slower = ("superpixel", "strided_conv")
    if results[faster] > results[slower]:
        faster, slower = slower, faster
    pct = 100.0 * (results[slower] - results[faster]) / results[slower]
    lines.append(f"{faster} is {pct:.1f}% faster per step (informational, hardware-dependent)")
    return "\n".join(lines) + "\n"
