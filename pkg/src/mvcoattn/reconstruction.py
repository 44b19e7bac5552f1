"""Decoders, the gamma-weighted cross reconstruction loss and view residuals."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coattention import ConfigError
from .layers import MLP
from .numerics import (
    Param,
    ShapeError,
    Tensor,
    abs_map,
    add,
    batch_mean,
    mul,
    reshape,
    sigmoid_map,
    square,
    stop_gradient,
    sub,
    sum_all,
)


class Decoder(MLP):
    """R^h -> R^{d*k}, reshaped to ``(B, d, k)`` (row-major)."""

    def __init__(self, h: int, d: int, k: int, rng, hidden: Sequence[int] = (64, 64), name="F"):
        super().__init__([h, *hidden, d * k], rng, hidden="tanh", out="linear", name=name)
        self.d, self.k = d, k


def decode(z, F: Decoder) -> Tensor:
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.shape[-2] != F.in_dim:
        raise ShapeError(f"decode: code length {z.shape[-2]} != decoder input {F.in_dim}")
    out = F(z)
    return reshape(out, (out.shape[0], F.d, F.k))


class GammaSimplex:
    """gamma1 = sigmoid(theta), gamma2 = 1 - gamma1."""

    def __init__(self, theta: float = 0.0):
        self.theta = Param(np.full((1, 1, 1), float(theta)), "gamma_logit", "gamma-logit")

    @property
    def params(self) -> list[Param]:
        return [self.theta]

    def floats(self) -> tuple[float, float]:
        g1, g2 = gamma_values(self)
        return float(g1.value.item()), float(g2.value.item())


def gamma_values(g: GammaSimplex) -> tuple[Tensor, Tensor]:
    g1 = sigmoid_map(g.theta)
    return g1, sub(1.0, g1)


@dataclass
class Reconstructions:
    """``pairs[(i, j)]`` reconstructs view ``i`` (0-based) from view ``j``'s code."""

    pairs: dict


def sq_norm(x) -> Tensor:
    """Per-sample squared Frobenius norm, shape ``(B,)``."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    return sum_all(square(x), axis=tuple(range(1, x.ndim)))


def _err(x, xh, normalize: bool = False) -> Tensor:
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.shape != xh.shape:
        raise ShapeError(f"reconstruction shape {xh.shape} != view shape {x.shape}")
    e = sq_norm(sub(x, xh))
    return mul(e, 1.0 / int(np.prod(x.shape[1:]))) if normalize else e


def cross_recon_loss(
    x1, x2, recon: Reconstructions, g: GammaSimplex, normalize: bool = False
) -> Tensor:
    """E[g1^3 |x1-x11|^2 + g2^3 |x2-x22|^2 + g1 g2^2 |x1-x12|^2 + g2 g1^2 |x2-x21|^2].

    ``normalize`` divides each squared norm by the number of view entries.
    """
    g1, g2 = gamma_values(g)
    g1 = reshape(g1, (1,))
    g2 = reshape(g2, (1,))
    r = recon.pairs
    terms = [
        mul(mul(mul(g1, g1), g1), _err(x1, r[(0, 0)], normalize)),
        mul(mul(mul(g2, g2), g2), _err(x2, r[(1, 1)], normalize)),
        mul(mul(mul(g1, g2), g2), _err(x1, r[(0, 1)], normalize)),
        mul(mul(mul(g2, g1), g1), _err(x2, r[(1, 0)], normalize)),
    ]
    total = terms[0]
    for t in terms[1:]:
        total = add(total, t)
    return batch_mean(total)


def self_recon_loss(x1, x2, recon: Reconstructions, normalize: bool = False) -> Tensor:
    """E[|x1 - F1(z1)|^2 + |x2 - F2(z2)|^2]."""
    r = recon.pairs
    return batch_mean(add(_err(x1, r[(0, 0)], normalize), _err(x2, r[(1, 1)], normalize)))


def cross_only_loss(x1, x2, recon: Reconstructions, normalize: bool = False) -> Tensor:
    """E[|x1 - F1(z2)|^2 + |x2 - F2(z1)|^2]."""
    r = recon.pairs
    return batch_mean(add(_err(x1, r[(0, 1)], normalize), _err(x2, r[(1, 0)], normalize)))


def l1_code_distance(z1, z2) -> Tensor:
    """E|z1 - z2|_1."""
    d = abs_map(sub(z1, z2))
    return batch_mean(sum_all(d, axis=tuple(range(1, d.ndim))))


def blended_loss(x1, x2, recon: Reconstructions, g: GammaSimplex) -> Tensor:
    """E[g1 |x1 - x̂1|^2 + g2 |x2 - x̂2|^2] with x̂_i = g1 x_(i,1) + g2 x_(i,2)."""
    g1, g2 = gamma_values(g)
    r = recon.pairs
    xh1 = add(mul(g1, r[(0, 0)]), mul(g2, r[(0, 1)]))
    xh2 = add(mul(g1, r[(1, 0)]), mul(g2, r[(1, 1)]))
    a = mul(reshape(g1, (1,)), _err(x1, xh1))
    b = mul(reshape(g2, (1,)), _err(x2, xh2))
    return batch_mean(add(a, b))


def residual(x, xh_from1, xh_from2, g: GammaSimplex, pass_through: bool = True) -> Tensor:
    """s = x - g1 x̂_(i,1) - g2 x̂_(i,2).

    With ``pass_through=False`` the reconstructions and gamma enter as
    constants, so no gradient reaches decoders or encoders through ``s``.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if not (x.shape == xh_from1.shape == xh_from2.shape):
        raise ShapeError(f"residual: shapes {x.shape}, {xh_from1.shape}, {xh_from2.shape}")
    g1, g2 = gamma_values(g)
    if not pass_through:
        xh_from1, xh_from2 = stop_gradient(xh_from1), stop_gradient(xh_from2)
        g1, g2 = stop_gradient(g1), stop_gradient(g2)
    return sub(sub(x, mul(g1, xh_from1)), mul(g2, xh_from2))


def self_residual(x, xh, pass_through: bool = True) -> Tensor:
    """s = x - F_i(z_i); residual used when there are more than two views."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    return sub(x, xh if pass_through else stop_gradient(xh))


def centroid_recon_loss(
    views: Sequence, codes: Sequence, decoders: Sequence[Decoder], normalize: bool = False
) -> Tensor:
    """1/v sum_i E|x1 - F1(z_i)|^2 + 1/v sum_i E|x_i - F_i(z_i)|^2 (squared norms)."""
    v = len(views)
    if v < 2:
        raise ConfigError(f"centroid reconstruction loss needs v >= 2, got {v}")
    if not (len(codes) == len(decoders) == v):
        raise ConfigError("views, codes and decoders must have equal length")
    first = decode(codes[0], decoders[0])
    to_first = _err(views[0], first, normalize)
    own = _err(views[0], first, normalize)
    for i in range(1, v):
        to_first = add(to_first, _err(views[0], decode(codes[i], decoders[0]), normalize))
        own = add(own, _err(views[i], decode(codes[i], decoders[i]), normalize))
    return mul(batch_mean(add(to_first, own)), 1.0 / v)
