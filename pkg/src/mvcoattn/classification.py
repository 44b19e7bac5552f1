"""Fusion of shared and view-specific features, classifier heads and label losses."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coattention import ConfigError
from .layers import MLP
from .numerics import (
    ShapeError,
    Tensor,
    add,
    batch_mean,
    clamped_log,
    concat,
    gather_rows,
    mul,
    narrow,
    reshape,
    softmax_map,
    square,
    sub,
    sum_all,
)


class Classifier(MLP):
    """Two affine layers, tanh hidden, softmax over classes."""

    def __init__(self, in_dim: int, n_classes: int, rng, hidden: int = 128, name: str = "C"):
        super().__init__([in_dim, hidden, n_classes], rng, hidden="tanh", out="linear", name=name)


def _flatten(s) -> Tensor:
    s = s if isinstance(s, Tensor) else Tensor(s)
    return reshape(s, (s.shape[0], int(np.prod(s.shape[1:])), 1))


def _col(z) -> Tensor:
    return z if isinstance(z, Tensor) else Tensor(z)


def fuse(z1, z2, s1, s2) -> Tensor:
    """z_s ⊕ vec(s1) ⊕ vec(s2) with z_s = (z1 + z2) / 2, shape ``(B, h + |s1| + |s2|, 1)``."""
    z1, z2 = _col(z1), _col(z2)
    if z1.shape != z2.shape:
        raise ShapeError(f"fuse: code shapes {z1.shape} and {z2.shape} differ")
    zs = mul(add(z1, z2), 0.5)
    return concat([zs, _flatten(s1), _flatten(s2)], axis=1)


def centroid_fuse(zs: Sequence, ss: Sequence) -> Tensor:
    """(1/v) sum z_i ⊕ vec(s_1) ⊕ ... ⊕ vec(s_v)."""
    v = len(zs)
    if v < 2 or len(ss) != v:
        raise ConfigError(f"centroid fusion needs v >= 2 codes and residuals, got {v}/{len(ss)}")
    acc = _col(zs[0])
    for z in zs[1:]:
        acc = add(acc, _col(z))
    mean = mul(acc, 0.5) if v == 2 else mul(acc, 1.0 / v)
    return concat([mean] + [_flatten(s) for s in ss], axis=1)


def shared_copies(zs: Sequence, width: int) -> Tensor:
    """Mean code tiled (and truncated) to ``width`` features."""
    acc = _col(zs[0])
    for z in zs[1:]:
        acc = add(acc, _col(z))
    mean = mul(acc, 0.5) if len(zs) == 2 else mul(acc, 1.0 / len(zs))
    h = mean.shape[1]
    reps = -(-width // h)
    tiled = concat([mean] * reps, axis=1)
    return tiled if reps * h == width else narrow(tiled, 0, width, axis=1)


@dataclass
class Prediction:
    probs: np.ndarray  # (n, c)

    @property
    def labels(self) -> np.ndarray:
        # np.argmax returns the first maximum: lowest-index tie-break
        return np.argmax(self.probs, axis=1)


def class_probs(f, C: MLP) -> Tensor:
    """Softmax class probabilities, shape ``(B, c)``."""
    f = _col(f)
    if f.shape[-2] != C.in_dim:
        raise ShapeError(f"classify: feature width {f.shape[-2]} != classifier input {C.in_dim}")
    p = softmax_map(C(f), axis=1)
    return reshape(p, (p.shape[0], p.shape[1]))


def classify(f, C: MLP) -> Prediction:
    return Prediction(class_probs(f, C).value.copy())


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=int)
    Y = np.zeros((labels.size, n_classes))
    Y[np.arange(labels.size), labels] = 1.0
    return Y


def check_one_hot(Y: np.ndarray) -> None:
    Y = np.asarray(Y)
    if Y.ndim != 2 or not np.all((Y == 0) | (Y == 1)) or not np.all(Y.sum(axis=1) == 1):
        raise ValueError("label rows must be one-hot")


def _probs(p) -> Tensor:
    if isinstance(p, Prediction):
        return Tensor(p.probs)
    return _col(p)


def cross_entropy(Y, P) -> Tensor:
    """mean_i -sum_k Y_ik log clamp(P_ik)."""
    check_one_hot(Y)
    P = _probs(P)
    if P.shape != np.shape(Y):
        raise ShapeError(f"cross_entropy: labels {np.shape(Y)} vs predictions {P.shape}")
    return soft_cross_entropy(Tensor(np.asarray(Y, float)), P)


def soft_cross_entropy(T, P) -> Tensor:
    """mean_i -sum_k T_ik log clamp(P_ik); ``T`` may be a distribution."""
    ll = mul(_col(T), clamped_log(_probs(P)))
    return mul(batch_mean(sum_all(ll, axis=1)), -1.0)


def squared_error(Y, P) -> Tensor:
    """mean_i |Y_i - P_i|^2."""
    check_one_hot(Y)
    d = sub(Tensor(np.asarray(Y, float)), _probs(P))
    return batch_mean(sum_all(square(d), axis=1))


def _rows(P: Tensor, mask: np.ndarray) -> Tensor:
    return gather_rows(P, np.flatnonzero(mask))


def semisup_loss(P1, P2, Y, labeled_mask, consistency_weight: float = 1.0) -> Tensor:
    """H(P1, P2) on unlabeled rows + H(Y, P1) + H(Y, P2) on labeled rows.

    ``Y`` rows of unlabeled samples are ignored. ``P1`` is the target
    distribution of the consistency term.
    """
    P1, P2 = _probs(P1), _probs(P2)
    mask = np.asarray(labeled_mask, bool)
    Y = np.asarray(Y, float)
    if not mask.any() and consistency_weight == 0:
        warnings.warn("semi-supervised loss with no labeled rows and zero consistency weight")
    total = Tensor(0.0)
    if (~mask).any() and consistency_weight != 0:
        cons = soft_cross_entropy(_rows(P1, ~mask), _rows(P2, ~mask))
        total = add(total, mul(cons, consistency_weight))
    if mask.any():
        Yl = Y[mask]
        total = add(total, cross_entropy(Yl, _rows(P1, mask)))
        total = add(total, cross_entropy(Yl, _rows(P2, mask)))
    return total

