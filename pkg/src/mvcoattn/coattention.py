"""Co-attention encoder: segment embeddings, affinity, co-attended hidden states,
segment attention weights and the attention-pooled latent code of each view.

Shapes (batch axis first):

* view segments ``X_i``: ``(B, d_i, k_i)``, column ``l`` is segment ``l``
* embeddings ``M_i = Q_i(X_i)``: ``(B, d_i, k_i)``
* affinity ``C_ik``: ``(B, k_i, k_k)``
* hidden states ``H_i``: ``(B, d3, k_i)``
* attention ``a_i``: ``(B, 1, k_i)``
* latent code ``z_i``: ``(B, h, 1)``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .layers import MLP, glorot_uniform
from .numerics import (
    Param,
    ShapeError,
    Tensor,
    add,
    matmul,
    softmax_map,
    tanh_map,
    transpose,
)


class ConfigError(ValueError):
    pass


@dataclass
class SegmentedView:
    """One view reshaped into ``k`` segments of width ``d`` (zero padded tail)."""

    segments: np.ndarray
    view: int = 0
    pad_count: int = 0

    def __post_init__(self):
        if self.segments.ndim not in (2, 3):
            raise ShapeError(f"segments must be (d, k) or (B, d, k), got {self.segments.shape}")
        if self.segments.shape[-1] < 1:
            raise ShapeError("a view needs at least one segment")

    @property
    def d(self) -> int:
        return self.segments.shape[-2]

    @property
    def k(self) -> int:
        return self.segments.shape[-1]


def embed_segments(view, Q: MLP) -> Tensor:
    """M_i = Q_i applied to every segment column."""
    x = view.segments if isinstance(view, SegmentedView) else view
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.shape[-2] != Q.in_dim:
        raise ConfigError(f"{Q.name}: segment width {x.shape[-2]} != network input {Q.in_dim}")
    return Q(x)


def affinity(M1: Tensor, M2: Tensor, W12) -> Tensor:
    """C = tanh(M1^T W12 M2), entries in (-1, 1)."""
    if W12.shape != (M1.shape[-2], M2.shape[-2]):
        raise ShapeError(
            f"affinity: W12 {W12.shape} does not match d1={M1.shape[-2]}, d2={M2.shape[-2]}"
        )
    return tanh_map(matmul(matmul(transpose(M1), W12), M2))


def coattend(M1: Tensor, M2: Tensor, C: Tensor, W1, W2) -> tuple[Tensor, Tensor]:
    """H1 = tanh(W1 M1 + (W2 M2) C^T),  H2 = tanh(W2 M2 + (W1 M1) C)."""
    P1 = matmul(W1, M1)
    P2 = matmul(W2, M2)
    H1 = tanh_map(add(P1, matmul(P2, transpose(C))))
    H2 = tanh_map(add(P2, matmul(P1, C)))
    return H1, H2


def attend_weights(H: Tensor, w_h) -> Tensor:
    """a = softmax(w_h H) over segments; ``w_h`` is a ``(1, d3)`` row."""
    if w_h.shape[-1] != H.shape[-2]:
        raise ShapeError(f"attend_weights: w_h {w_h.shape} vs H {H.shape}")
    return softmax_map(matmul(w_h, H), axis=-1)


def encode_view(M: Tensor, a: Tensor, E: MLP) -> Tensor:
    """z = E(sum_l a_l M_l)."""
    return E(pool(M, a))


def pool(M: Tensor, a: Tensor) -> Tensor:
    if a.shape[-1] != M.shape[-1]:
        raise ShapeError(f"pool: {a.shape[-1]} weights for {M.shape[-1]} segments")
    return matmul(M, transpose(a))


def pair_key(i: int, k: int) -> tuple[int, int]:
    return (i, k) if i < k else (k, i)


def multiview_affinities(Ms: Sequence[Tensor], pair_W: dict) -> dict:
    """C_ik for every i < k; C_ki is the transpose of C_ik."""
    out = {}
    for i in range(len(Ms)):
        for k in range(i + 1, len(Ms)):
            out[(i, k)] = affinity(Ms[i], Ms[k], pair_W[(i, k)])
    return out


def multiview_coattend(Ms: Sequence[Tensor], pair_W: dict, Ws: Sequence) -> list[Tensor]:
    """H_i = tanh(W_i M_i + sum_{k != i} (W_k M_k) C_ik^T).

    ``pair_W`` maps ``(i, k)`` with ``i < k`` to ``W_ik``; the reverse
    direction uses ``C_ki = C_ik^T`` so two views reproduce :func:`coattend`.
    """
    v = len(Ms)
    if v < 2:
        raise ConfigError(f"multi-view co-attention needs at least 2 views, got {v}")
    Cs = multiview_affinities(Ms, pair_W)
    P = [matmul(W, M) for W, M in zip(Ws, Ms)]
    Hs = []
    for i in range(v):
        acc = P[i]
        for k in range(v):
            if k == i:
                continue
            if i < k:
                # (C_ik)^T
                acc = add(acc, matmul(P[k], transpose(Cs[(i, k)])))
            else:
                # (C_ik)^T = C_ki
                acc = add(acc, matmul(P[k], Cs[(k, i)]))
        Hs.append(tanh_map(acc))
    return Hs


@dataclass
class EncoderOutput:
    codes: list[Tensor]
    attention: list[Tensor]
    embeddings: list[Tensor]
    hidden: list[Tensor] = field(default_factory=list)


class CoAttentionEncoder:
    """Holds Q_i, W_ik, W_i, w_hi and E_i for ``v`` views."""

    def __init__(
        self,
        seg_dims: Sequence[int],
        h: int,
        d3: int,
        rng: np.random.Generator,
        q_hidden: int | None = None,
        e_hidden: int = 64,
        share_encoders: bool = False,
        code_activation: str = "tanh",
    ):
        v = len(seg_dims)
        if v < 2:
            raise ConfigError("need at least two views")
        if share_encoders and len(set(seg_dims)) != 1:
            raise ConfigError("shared E requires equal segment widths across views")
        self.seg_dims = list(seg_dims)
        self.h, self.d3 = h, d3
        self.Q = [
            MLP([d, q_hidden or d, d], rng, name=f"Q{i + 1}") for i, d in enumerate(seg_dims)
        ]
        self.pair_W = {
            (i, k): Param(
                glorot_uniform(rng, seg_dims[i], seg_dims[k]), f"W_{i + 1}{k + 1}", "weight"
            )
            for i in range(v)
            for k in range(i + 1, v)
        }
        self.W = [
            Param(glorot_uniform(rng, d3, d), f"Wproj{i + 1}", "weight")
            for i, d in enumerate(seg_dims)
        ]
        self.w_h = [
            Param(glorot_uniform(rng, 1, d3), f"w_h{i + 1}", "weight") for i in range(v)
        ]
        if share_encoders:
            E = MLP([seg_dims[0], e_hidden, h], rng, out=code_activation, name="E")
            self.E = [E] * v
        else:
            self.E = [
                MLP([d, e_hidden, h], rng, out=code_activation, name=f"E{i + 1}")
                for i, d in enumerate(seg_dims)
            ]

    @property
    def v(self) -> int:
        return len(self.seg_dims)

    @property
    def params(self) -> list[Param]:
        out: list[Param] = []
        for q in self.Q:
            out += q.params
        out += [self.pair_W[key] for key in sorted(self.pair_W)]
        out += self.W + self.w_h
        seen = set()
        for e in self.E:
            if id(e) not in seen:
                seen.add(id(e))
                out += e.params
        return out

    def __call__(self, xs: Sequence) -> EncoderOutput:
        if len(xs) != self.v:
            raise ConfigError(f"expected {self.v} views, got {len(xs)}")
        Ms = [embed_segments(x, q) for x, q in zip(xs, self.Q)]
        if self.v == 2:
            C = affinity(Ms[0], Ms[1], self.pair_W[(0, 1)])
            Hs = list(coattend(Ms[0], Ms[1], C, self.W[0], self.W[1]))
        else:
            Hs = multiview_coattend(Ms, self.pair_W, self.W)
        attn = [attend_weights(H, w) for H, w in zip(Hs, self.w_h)]
        codes = [encode_view(M, a, E) for M, a, E in zip(Ms, attn, self.E)]
        return EncoderOutput(codes=codes, attention=attn, embeddings=Ms, hidden=Hs)
