"""Dense array arithmetic with a taped reverse-mode gradient engine.

Values are float64 numpy arrays. Matrices follow the column convention used
throughout the package: a batch of ``B`` matrices of shape ``rows x cols`` is
stored as ``(B, rows, cols)``; a batch of column vectors is ``(B, n, 1)``.
Weights are unbatched ``(out, in)`` arrays and broadcast over the batch.

Operations record themselves on the active :class:`Tape` (if any). Creation
order is a valid topological order, so ``Tape.backward`` walks the record in
reverse.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

PROB_EPS = 1e-7

_ACTIVE: list["Tape"] = []


class ShapeError(ValueError):
    pass


class EvaluationError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_node")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._node = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a Tensor is not supported")
        return mul(self, 1.0 / other)

    @property
    def T(self):
        return transpose(self)


class Param(Tensor):
    """A learnable leaf. ``role`` is one of weight, bias, gamma-logit."""

    __slots__ = ("name", "role")

    def __init__(self, value, name: str = "", role: str = "weight"):
        super().__init__(np.array(value, dtype=np.float64), requires_grad=True)
        self.name = name
        self.role = role
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Param({self.name!r}, role={self.role}, shape={self.shape})"


class _Node:
    __slots__ = ("out", "parents", "backward")

    def __init__(self, out: Tensor, parents: Sequence[Tensor], backward: Callable):
        self.out = out
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations from one forward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def backward(self, loss: Tensor, params: Iterable[Param] | None = None) -> None:
        """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf.

        When ``params`` is given those gradients are zeroed first.
        """
        if loss.value.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        for node in self.nodes:
            for parent in node.parents:
                if isinstance(parent, Param):
                    parent.zero_grad()
        if params is not None:
            for p in params:
                p.zero_grad()
        adj: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self.nodes):
            g = adj.pop(id(node.out), None)
            if g is None:
                continue
            grads = node.backward(g)
            for parent, pg in zip(node.parents, grads):
                if pg is None or not parent.requires_grad:
                    continue
                if parent._node is None:
                    # leaf
                    if parent.grad is None:
                        parent.grad = np.zeros_like(parent.value)
                    parent.grad = parent.grad + pg
                else:
                    key = id(parent)
                    adj[key] = adj[key] + pg if key in adj else pg


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(value: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(value)
    if _ACTIVE and any(p.requires_grad for p in parents):
        out.requires_grad = True
        node = _Node(out, parents, backward)
        out._node = node
        _ACTIVE[-1].nodes.append(node)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    return _record(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")
    return _record(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _record(
        a.value * b.value,
        (a, b),
        lambda g: (_unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)),
    )


def tanh_map(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.value)
    return _record(y, (x,), lambda g: (g * (1.0 - y * y),))


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_map(x) -> Tensor:
    x = _as_tensor(x)
    y = _stable_sigmoid(x.value)
    return _record(y, (x,), lambda g: (g * y * (1.0 - y),))


def softmax_map(x, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` with max-subtraction."""
    x = _as_tensor(x)
    if x.value.size == 0 or x.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    shifted = x.value - x.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record(y, (x,), back)


def log_map(x) -> Tensor:
    x = _as_tensor(x)
    return _record(np.log(x.value), (x,), lambda g: (g / x.value,))


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clip into [lo, hi]; gradient is zero where the clip is active."""
    x = _as_tensor(x)
    y = np.clip(x.value, lo, hi)
    inside = (x.value >= lo) & (x.value <= hi)
    return _record(y, (x,), lambda g: (g * inside,))


def clamped_log(p, eps: float = PROB_EPS) -> Tensor:
    """log of a probability clamped into [eps, 1 - eps]."""
    return log_map(clamp(p, eps, 1.0 - eps))


def abs_map(x) -> Tensor:
    x = _as_tensor(x)
    return _record(np.abs(x.value), (x,), lambda g: (g * np.sign(x.value),))


def square(x) -> Tensor:
    x = _as_tensor(x)
    return _record(x.value * x.value, (x,), lambda g: (2.0 * g * x.value,))


def stop_gradient(x) -> Tensor:
    return Tensor(_as_tensor(x).value)


# ------------------------------------------------------------------ structural


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    y = np.matmul(a.value, b.value)

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
        gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _record(y, (a, b), back)


def transpose(x) -> Tensor:
    """Swap the last two axes."""
    x = _as_tensor(x)
    return _record(np.swapaxes(x.value, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(x, shape: tuple[int, ...]) -> Tensor:
    x = _as_tensor(x)
    return _record(x.value.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def concat(xs: Sequence, axis: int) -> Tensor:
    xs = [_as_tensor(x) for x in xs]
    try:
        y = np.concatenate([x.value for x in xs], axis=axis)
    except ValueError as err:
        raise ShapeError(f"concat: {[x.shape for x in xs]} along axis {axis}") from err
    edges = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def back(g):
        return tuple(np.split(g, edges, axis=axis))

    return _record(y, tuple(xs), back)


def take(x, index: int, axis: int) -> Tensor:
    """Select one slice along ``axis`` keeping the dimension."""
    x = _as_tensor(x)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(index, index + 1)
    sl = tuple(sl)

    def back(g):
        out = np.zeros_like(x.value)
        out[sl] = g
        return (out,)

    return _record(x.value[sl], (x,), back)


def sum_all(x, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    y = x.value.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record(np.asarray(y), (x,), back)


def mean_all(x) -> Tensor:
    x = _as_tensor(x)
    return mul(sum_all(x), 1.0 / x.value.size)


def batch_mean(x) -> Tensor:
    """Mean over the leading (batch) axis of per-sample scalars."""
    x = _as_tensor(x)
    return mul(sum_all(x), 1.0 / x.shape[0])


def linear_apply(W, x, b=None) -> Tensor:
    """y = W x (+ b broadcast over columns)."""
    W, x = _as_tensor(W), _as_tensor(x)
    if W.shape[-1] != x.shape[-2]:
        raise ShapeError(f"linear_apply: W {W.shape} cannot multiply x {x.shape}")
    y = matmul(W, x)
    return y if b is None else add(y, b)


# --------------------------------------------------------------------- helpers


def zero_grads(params: Iterable[Param]) -> None:
    for p in params:
        p.zero_grad()


@contextlib.contextmanager
def no_tape():
    """Suspend recording (forward-only evaluation)."""
    saved = list(_ACTIVE)
    _ACTIVE.clear()
    try:
        yield
    finally:
        _ACTIVE.extend(saved)


def value_and_grad(loss_fn: Callable[[], Tensor], params: Sequence[Param]) -> float:
    """Run ``loss_fn`` on a fresh tape and fill ``p.grad`` for ``params``."""
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss, params)
    v = float(loss.value)
    if not np.isfinite(v):
        raise EvaluationError(f"non-finite loss {v}")
    return v


def grad_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Param],
    step: float = 1e-5,
    seed: int | None = None,
    max_entries: int | None = None,
) -> float:
    """Compare taped gradients with central differences.

    Returns the max over parameters of ``|g - n| / max(|g|, |n|, 1e-8)``
    where the norms are Euclidean over the parameter's entries. ``loss_fn``
    must be deterministic. ``max_entries`` limits the number of probed
    entries per parameter (chosen with ``seed``); unprobed entries are
    excluded from both sides.
    """
    if not 1e-6 <= step <= 1e-4:
        raise ValueError(f"step {step} outside [1e-6, 1e-4]")
    value_and_grad(loss_fn, params)
    analytic = [p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_tape():
        for p, ga in zip(params, analytic):
            flat = p.value.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = rng.choice(flat.size, size=max_entries, replace=False)
            num = np.empty(idx.size)
            for j, i in enumerate(idx):
                orig = flat[i]
                flat[i] = orig + step
                up = float(loss_fn().value)
                flat[i] = orig - step
                down = float(loss_fn().value)
                flat[i] = orig
                if not (np.isfinite(up) and np.isfinite(down)):
                    raise EvaluationError(f"non-finite loss while probing {p.name}")
                num[j] = (up - down) / (2.0 * step)
            a = ga.reshape(-1)[idx]
            denom = max(np.linalg.norm(a), np.linalg.norm(num), 1e-8)
            worst = max(worst, float(np.linalg.norm(a - num) / denom))
    return worst


def gather_rows(x, idx) -> Tensor:
    """Rows ``idx`` of the leading axis."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=int)

    def back(g):
        out = np.zeros_like(x.value)
        np.add.at(out, idx, g)
        return (out,)

    return _record(x.value[idx], (x,), back)


def narrow(x, start: int, stop: int, axis: int) -> Tensor:
    """Slice ``start:stop`` along ``axis``."""
    x = _as_tensor(x)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)

    def back(g):
        out = np.zeros_like(x.value)
        out[sl] = g
        return (out,)

    return _record(x.value[sl], (x,), back)
