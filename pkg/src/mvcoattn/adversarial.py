"""View discriminator and the encoder-vs-discriminator alignment game."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coattention import ConfigError
from .layers import MLP
from .numerics import PROB_EPS, Tensor, add, batch_mean, clamp, clamped_log, mul, sub


class Discriminator(MLP):
    """Affine stack with tanh hidden layers and a sigmoid head (P[z from view 1])."""

    def __init__(self, h: int, rng: np.random.Generator, hidden: Sequence[int] = (64, 64)):
        super().__init__([h, *hidden, 1], rng, hidden="tanh", out="sigmoid", name="D")


def discriminate(z, D: MLP) -> Tensor:
    """Clamped probability, shape ``(B, 1, 1)``."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    return clamp(D(z), PROB_EPS, 1.0 - PROB_EPS)


@dataclass
class AdversarialLoss:
    value: Tensor
    real_term: Tensor  # E[log D(z1)]
    fake_term: Tensor  # E[log(1 - D(z2))]

    def __float__(self) -> float:
        return float(self.value.value)


def _log_d(z, D) -> Tensor:
    return batch_mean(clamped_log(D(z)))


def _log_one_minus_d(z, D) -> Tensor:
    return batch_mean(clamped_log(sub(1.0, D(z))))


def adversarial_loss(z1, z2, D: MLP) -> AdversarialLoss:
    """L0 = E[log D(z1)] + E[log(1 - D(z2))] over the two minibatches."""
    if z1.shape[0] == 0 or z2.shape[0] == 0:
        raise ValueError("adversarial_loss needs non-empty batches")
    real = _log_d(z1, D)
    fake = _log_one_minus_d(z2, D)
    return AdversarialLoss(add(real, fake), real, fake)


def centroid_adversarial_loss(zs: Sequence, D: MLP) -> Tensor:
    """E[log D(z_1)] + 1/(v-1) * sum_{i>=2} E[log(1 - D(z_i))], view 1 the centroid."""
    v = len(zs)
    if v < 2:
        raise ConfigError(f"centroid adversarial loss needs v >= 2, got {v}")
    if any(z.shape[0] == 0 for z in zs):
        raise ValueError("centroid_adversarial_loss needs non-empty batches")
    fake = _log_one_minus_d(zs[1], D)
    for z in zs[2:]:
        fake = add(fake, _log_one_minus_d(z, D))
    if v > 2:
        fake = mul(fake, 1.0 / (v - 1))
    return add(_log_d(zs[0], D), fake)


def non_saturating_encoder_loss(zs: Sequence, D: MLP) -> Tensor:
    """Encoders minimise -log(1 - D(z_1)) - mean_{i>=2} log D(z_i) (flipped labels)."""
    loss = mul(_log_one_minus_d(zs[0], D), -1.0)
    rest = _log_d(zs[1], D)
    for z in zs[2:]:
        rest = add(rest, _log_d(z, D))
    if len(zs) > 2:
        rest = mul(rest, 1.0 / (len(zs) - 1))
    return sub(loss, rest)


def optimal_discriminator(p1, p2):
    """Pointwise maximiser of p1 log c + p2 log(1 - c)."""
    p1, p2 = np.asarray(p1, float), np.asarray(p2, float)
    return p1 / (p1 + p2)
