"""Fully connected stacks acting column-wise on ``(B, features, cols)`` batches."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .numerics import Param, Tensor, linear_apply, sigmoid_map, tanh_map

_ACTIVATIONS = {
    "tanh": tanh_map,
    "sigmoid": sigmoid_map,
    "linear": lambda x: x,
}


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class MLP:
    """Affine layers with ``hidden`` activation between them and ``out`` after the last.

    ``sizes`` lists widths from input to output, so ``len(sizes) - 1`` layers.
    Each column of the input is mapped independently.
    """

    def __init__(
        self,
        sizes: Sequence[int],
        rng: np.random.Generator,
        hidden: str = "tanh",
        out: str = "linear",
        name: str = "mlp",
    ):
        if len(sizes) < 2:
            raise ValueError(f"{name}: need at least input and output widths, got {sizes}")
        self.sizes = list(sizes)
        self.hidden = hidden
        self.out = out
        self.name = name
        self.weights: list[Param] = []
        self.biases: list[Param] = []
        for i, (fi, fo) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.weights.append(Param(glorot_uniform(rng, fo, fi), f"{name}.W{i}", "weight"))
            self.biases.append(Param(np.zeros((fo, 1)), f"{name}.b{i}", "bias"))

    @property
    def params(self) -> list[Param]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def __call__(self, x: Tensor) -> Tensor:
        n = len(self.weights)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = linear_apply(w, x, b)
            x = _ACTIVATIONS[self.out if i == n - 1 else self.hidden](x)
        return x
