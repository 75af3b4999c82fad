"""Training objectives.

Every loss is a scalar Tensor built from autodiff primitives, averaged over
the batch.  The sample-space and feature-space losses normalize by the
per-item element count, which for the 1-channel signals used here equals the
mean over all elements.
"""

from __future__ import annotations

from dataclasses import dataclass

from .autodiff import Tensor, add, clamp_min, log, mean_all, mul_scalar, neg, square, sub

__all__ = [
    "LOG_FLOOR",
    "LossWeights",
    "l2_loss",
    "feature_loss",
    "adversarial_loss_g",
    "generator_loss",
    "discriminator_loss",
]

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_f: float = 1.0
    lambda_adv: float = 0.001

    def __post_init__(self):
        if self.lambda_f < 0 or self.lambda_adv < 0:
            raise ValueError("loss weights must be nonnegative")


def l2_loss(x_h: Tensor, g_out: Tensor) -> Tensor:
    """Mean squared sample error, averaged over batch and time."""
    if x_h.shape != g_out.shape:
        raise ValueError(f"l2_loss: shape mismatch {x_h.shape} vs {g_out.shape}")
    return mean_all(square(sub(x_h, g_out)))


def feature_loss(phi_h: Tensor, phi_g: Tensor) -> Tensor:
    """Mean squared distance between bottleneck feature tensors.

    phi_h must come from the frozen autoencoder: no gradient flows into its
    parameters because they are created with requires_grad off.
    """
    if phi_h.shape != phi_g.shape:
        raise ValueError(f"feature_loss: shape mismatch {phi_h.shape} vs {phi_g.shape}")
    return mean_all(square(sub(phi_h, phi_g)))


def adversarial_loss_g(d_of_g: Tensor) -> Tensor:
    """Non-saturating generator objective: batch mean of -log D(G(x))."""
    return mean_all(neg(log(clamp_min(d_of_g, LOG_FLOOR))))


def generator_loss(x_h, g_out, phi_h, phi_g, d_of_g, w: LossWeights) -> Tensor:
    """Composite objective: L2 + lambda_f * feature + lambda_adv * adversarial.

    Zero-weight terms are skipped entirely, so their gradients are exactly
    those of the remaining terms (not merely close).
    """
    total = l2_loss(x_h, g_out)
    if w.lambda_f != 0.0:
        if phi_h is None or phi_g is None:
            raise ValueError("feature term enabled but feature tensors are missing")
        total = add(total, mul_scalar(feature_loss(phi_h, phi_g), w.lambda_f))
    if w.lambda_adv != 0.0:
        if d_of_g is None:
            raise ValueError("adversarial term enabled but discriminator output is missing")
        total = add(total, mul_scalar(adversarial_loss_g(d_of_g), w.lambda_adv))
    return total


def discriminator_loss(d_real: Tensor, d_fake: Tensor) -> Tensor:
    """Batch mean of -log D(real) - log(1 - D(fake)).

    The caller must detach the generator output before scoring it, so the
    discriminator update cannot reach generator parameters.
    """
    if d_real.shape != d_fake.shape:
        raise ValueError(f"discriminator_loss: shape mismatch {d_real.shape} vs {d_fake.shape}")
    real_term = neg(log(clamp_min(d_real, LOG_FLOOR)))
    fake_term = neg(log(clamp_min(add(neg(d_fake), 1.0), LOG_FLOOR)))
    return mean_all(add(real_term, fake_term))
