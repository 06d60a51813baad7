"""Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a contiguous row-major numpy array plus an optional
gradient. Operations build a graph of backward closures; ``backward()`` on a
scalar result accumulates gradients into every ``requires_grad`` leaf. The
contract that matters is finite-difference fidelity, which the test suite
checks for every op and every training loss in float64.

Per-row and per-element hot paths delegate to ``eventcl.kernels`` (numba or
numpy, selected by ``EVENTCL_BACKEND``); matmul stays on BLAS.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DimensionError, NumericError

__all__ = [
    "Tensor",
    "tensor",
    "matmul",
    "add",
    "sub",
    "mul",
    "neg",
    "scale",
    "exp",
    "log",
    "tsum",
    "tmean",
    "reshape",
    "transpose",
    "slice_rows",
    "softmax_rows",
    "log_softmax_rows",
    "layer_norm",
    "gelu",
    "dropout",
    "embedding_lookup",
    "gather_positions",
    "select_token",
    "l2_normalize_rows",
    "cross_entropy_logits",
    "zero_grads",
    "finite_difference_grad",
    "AdamState",
    "adam_step",
    "save_checkpoint",
    "load_checkpoint",
]


class Tensor:
    """N-d float array with optional gradient and backward closure."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward_fn")

    def __init__(
        self,
        data: np.ndarray | Sequence | float,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        _backward_fn: Callable[[np.ndarray], None] | None = None,
    ):
        arr = np.ascontiguousarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward_fn = _backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        # copy on first touch: g may alias another node's buffer
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar result."""
        if self.data.size != 1:
            raise DimensionError("backward() requires a scalar tensor")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # Convenience arithmetic; the module-level functions are the primary API.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not supported; divide by a scalar")
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr, requires_grad=requires_grad)


def _coerce(value, like: Tensor) -> Tensor:
    """Wrap plain arrays/scalars as constant tensors of a matching dtype."""
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.dtype))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(a: Tensor, b, fwd, bwd_a, bwd_b) -> Tensor:
    b = _coerce(b, a)
    out_data = fwd(a.data, b.data)
    req = a.requires_grad or b.requires_grad
    out = Tensor(out_data, requires_grad=req, _parents=(a, b))

    def _backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(bwd_a(g, a.data, b.data), a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(bwd_b(g, a.data, b.data), b.data.shape))

    out._backward_fn = _backward if req else None
    return out


def add(a: Tensor, b) -> Tensor:
    return _binary(a, b, lambda x, y: x + y, lambda g, x, y: g, lambda g, x, y: g)


def sub(a: Tensor, b) -> Tensor:
    return _binary(a, b, lambda x, y: x - y, lambda g, x, y: g, lambda g, x, y: -g)


def mul(a: Tensor, b) -> Tensor:
    return _binary(a, b, lambda x, y: x * y, lambda g, x, y: g * y, lambda g, x, y: g * x)


def neg(a: Tensor) -> Tensor:
    return scale(a, -1.0)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * np.asarray(c, dtype=a.dtype), requires_grad=a.requires_grad, _parents=(a,))
    if a.requires_grad:
        out._backward_fn = lambda g: a.accumulate_grad(g * c)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product. 2-d x 2-d, n-d x 2-d, or batched n-d x n-d with equal
    leading dimensions."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError("matmul requires at least 2-d operands")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    if a.data.ndim != b.data.ndim and b.data.ndim != 2:
        raise DimensionError(f"unsupported matmul ranks: {a.shape} x {b.shape}")
    if a.data.ndim == b.data.ndim and a.data.shape[:-2] != b.data.shape[:-2]:
        raise DimensionError(f"matmul batch dimensions disagree: {a.shape} x {b.shape}")

    out_data = np.matmul(a.data, b.data)
    req = a.requires_grad or b.requires_grad
    out = Tensor(out_data, requires_grad=req, _parents=(a, b))

    def _backward(g: np.ndarray) -> None:
        if a.requires_grad:
            if b.data.ndim == 2:
                a.accumulate_grad(np.matmul(g, b.data.T).reshape(a.data.shape))
            else:
                a.accumulate_grad(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            if b.data.ndim == 2:
                g2 = g.reshape(-1, g.shape[-1])
                a2 = a.data.reshape(-1, a.data.shape[-1])
                b.accumulate_grad(np.matmul(a2.T, g2))
            else:
                b.accumulate_grad(np.matmul(np.swapaxes(a.data, -1, -2), g))

    out._backward_fn = _backward if req else None
    return out


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    out = Tensor(y, requires_grad=a.requires_grad, _parents=(a,))
    if a.requires_grad:
        out._backward_fn = lambda g: a.accumulate_grad(g * y)
    return out


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0):
        raise NumericError("log requires strictly positive inputs")
    out = Tensor(np.log(a.data), requires_grad=a.requires_grad, _parents=(a,))
    if a.requires_grad:
        out._backward_fn = lambda g: a.accumulate_grad(g / a.data)
    return out


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    out_data = a.data.sum(axis=axis)
    out = Tensor(np.asarray(out_data, dtype=a.dtype), requires_grad=a.requires_grad, _parents=(a,))
    if a.requires_grad:

        def _backward(g: np.ndarray) -> None:
            if axis is None:
                a.accumulate_grad(np.broadcast_to(g, a.data.shape).astype(a.dtype, copy=False))
            else:
                a.accumulate_grad(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).astype(a.dtype, copy=False))

        out._backward_fn = _backward
    return out


def tmean(a: Tensor, axis: int | None = None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    return scale(tsum(a, axis=axis), 1.0 / n)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = Tensor(a.data.reshape(shape), requires_grad=a.requires_grad, _parents=(a,))
    if a.requires_grad:
        out._backward_fn = lambda g: a.accumulate_grad(g.reshape(a.data.shape))
    return out


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    inverse = tuple(np.argsort(axes))
    out = Tensor(np.ascontiguousarray(a.data.transpose(axes)), requires_grad=a.requires_grad, _parents=(a,))
    if a.requires_grad:
        out._backward_fn = lambda g: a.accumulate_grad(np.ascontiguousarray(g.transpose(inverse)))
    return out


def _rows(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.reshape(-1, x.shape[-1]))


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax over the last axis, max-subtracted for stability."""
    y2 = kernels.softmax_forward(_rows(a.data))
    y = y2.reshape(a.data.shape)
    out = Tensor(y, requires_grad=a.requires_grad, _parents=(a,))
    if a.requires_grad:

        def _backward(g: np.ndarray) -> None:
            dx = kernels.softmax_backward(_rows(g), y2)
            a.accumulate_grad(dx.reshape(a.data.shape))

        out._backward_fn = _backward
    return out


def log_softmax_rows(a: Tensor) -> Tensor:
    x2 = _rows(a.data)
    p2 = kernels.softmax_forward(x2)
    shifted = x2 - x2.max(axis=1, keepdims=True)
    lsm = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = Tensor(lsm.reshape(a.data.shape).astype(a.dtype, copy=False), requires_grad=a.requires_grad, _parents=(a,))
    if a.requires_grad:

        def _backward(g: np.ndarray) -> None:
            g2 = _rows(g)
            dx = g2 - p2 * g2.sum(axis=1, keepdims=True)
            a.accumulate_grad(dx.reshape(a.data.shape).astype(a.dtype, copy=False))

        out._backward_fn = _backward
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-vector zero-mean / unit-variance over the last axis, then affine."""
    d = gain.data.shape[0]
    if x.data.shape[-1] != d or bias.data.shape[0] != d:
        raise DimensionError("layer_norm: last dimension must match gain/bias length")
    x2 = _rows(x.data)
    y2, xhat, rstd = kernels.layer_norm_forward(x2, gain.data, bias.data, eps)
    req = x.requires_grad or gain.requires_grad or bias.requires_grad
    out = Tensor(y2.reshape(x.data.shape), requires_grad=req, _parents=(x, gain, bias))

    def _backward(g: np.ndarray) -> None:
        g2 = _rows(g)
        if x.requires_grad:
            dx = kernels.layer_norm_backward_input(g2, xhat, rstd, gain.data)
            x.accumulate_grad(dx.reshape(x.data.shape))
        if gain.requires_grad:
            gain.accumulate_grad((g2 * xhat).sum(axis=0))
        if bias.requires_grad:
            bias.accumulate_grad(g2.sum(axis=0))

    out._backward_fn = _backward if req else None
    return out


def gelu(a: Tensor) -> Tensor:
    out = Tensor(kernels.gelu_forward(a.data), requires_grad=a.requires_grad, _parents=(a,))
    if a.requires_grad:
        out._backward_fn = lambda g: a.accumulate_grad(kernels.gelu_backward(g, a.data))
    return out


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout. The caller decides train vs eval; rate 0 is identity."""
    if rate <= 0.0:
        return a
    if rate >= 1.0:
        raise NumericError("dropout rate must be < 1")
    keep = (rng.random(a.data.shape) >= rate).astype(a.dtype) / np.asarray(1.0 - rate, dtype=a.dtype)
    out = Tensor(a.data * keep, requires_grad=a.requires_grad, _parents=(a,))
    if a.requires_grad:
        out._backward_fn = lambda g: a.accumulate_grad(g * keep)
    return out


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of an embedding table: table [V, d], ids int [...]."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError("token id out of embedding-table range")
    out = Tensor(table.data[ids], requires_grad=table.requires_grad, _parents=(table,))
    if table.requires_grad:
        flat_ids = np.ascontiguousarray(ids.reshape(-1))

        def _backward(g: np.ndarray) -> None:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            kernels.embedding_grad(flat_ids, np.ascontiguousarray(g.reshape(-1, g.shape[-1])), table.grad)

        out._backward_fn = _backward
    return out


def gather_positions(x: Tensor, positions: Sequence[tuple[int, int]]) -> Tensor:
    """Select token vectors at (batch, time) positions: x [B,T,d] -> [n,d]."""
    b_idx = np.asarray([p[0] for p in positions], dtype=np.int64)
    t_idx = np.asarray([p[1] for p in positions], dtype=np.int64)
    B, T = x.data.shape[0], x.data.shape[1]
    if b_idx.size and (b_idx.min() < 0 or b_idx.max() >= B or t_idx.min() < 0 or t_idx.max() >= T):
        raise IndexError("gather position out of range")
    out = Tensor(x.data[b_idx, t_idx], requires_grad=x.requires_grad, _parents=(x,))
    if x.requires_grad:

        def _backward(g: np.ndarray) -> None:
            dx = np.zeros_like(x.data)
            np.add.at(dx, (b_idx, t_idx), g)
            x.accumulate_grad(dx)

        out._backward_fn = _backward
    return out


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous row range of a [B, ...] tensor."""
    if not 0 <= start <= stop <= x.data.shape[0]:
        raise IndexError(f"row slice [{start}:{stop}] out of range for {x.shape}")
    out = Tensor(np.ascontiguousarray(x.data[start:stop]), requires_grad=x.requires_grad, _parents=(x,))
    if x.requires_grad:

        def _backward(g: np.ndarray) -> None:
            dx = np.zeros_like(x.data)
            dx[start:stop] = g
            x.accumulate_grad(dx)

        out._backward_fn = _backward
    return out


def select_token(x: Tensor, t: int = 0) -> Tensor:
    """x [B,T,d] -> x[:, t, :] as [B,d]; used for [CLS] pooling."""
    out = Tensor(np.ascontiguousarray(x.data[:, t, :]), requires_grad=x.requires_grad, _parents=(x,))
    if x.requires_grad:

        def _backward(g: np.ndarray) -> None:
            dx = np.zeros_like(x.data)
            dx[:, t, :] = g
            x.accumulate_grad(dx)

        out._backward_fn = _backward
    return out


def l2_normalize_rows(x: Tensor, min_norm: float = 1e-12) -> Tensor:
    """Scale each row of x [B,d] to unit L2 norm."""
    norms = np.sqrt((x.data * x.data).sum(axis=1, keepdims=True))
    if np.any(norms < min_norm):
        raise NumericError("cannot L2-normalize a zero-norm row")
    y = x.data / norms
    out = Tensor(y.astype(x.dtype, copy=False), requires_grad=x.requires_grad, _parents=(x,))
    if x.requires_grad:

        def _backward(g: np.ndarray) -> None:
            inner = (g * y).sum(axis=1, keepdims=True)
            x.accumulate_grad(((g - y * inner) / norms).astype(x.dtype, copy=False))

        out._backward_fn = _backward
    return out


def cross_entropy_logits(logits: Tensor, targets: Sequence[int]) -> Tensor:
    """Mean negative log-softmax probability of the target classes.

    logits [n, V], targets: n class indices. Raises IndexError on any index
    outside [0, V).
    """
    t = np.asarray(list(targets), dtype=np.int64)
    n, V = logits.data.shape
    if t.shape[0] != n:
        raise DimensionError(f"expected {n} targets, got {t.shape[0]}")
    if t.size and (t.min() < 0 or t.max() >= V):
        raise IndexError("target class index out of range")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(x - m).sum(axis=1, keepdims=True)))[:, 0]
    picked = x[np.arange(n), t]
    loss = np.asarray((lse - picked).mean(), dtype=x.dtype)
    out = Tensor(loss, requires_grad=logits.requires_grad, _parents=(logits,))
    if logits.requires_grad:
        probs = kernels.softmax_forward(np.ascontiguousarray(x))

        def _backward(g: np.ndarray) -> None:
            dx = probs.copy()
            dx[np.arange(n), t] -= 1.0
            logits.accumulate_grad(dx * (g / n))

        out._backward_fn = _backward
    return out


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def finite_difference_grad(f: Callable[[Tensor], float], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a
    time. f must be deterministic; float64 inputs recommended."""
    if h <= 0:
        raise NumericError("finite differences need h > 0")
    base = x.data.copy()
    flat = base.reshape(-1)
    out = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = float(f(Tensor(base.reshape(x.data.shape))))
        flat[i] = orig - h
        f_minus = float(f(Tensor(base.reshape(x.data.shape))))
        flat[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NumericError("objective returned non-finite value during finite differencing")
        out[i] = (f_plus - f_minus) / (2.0 * h)
    return out


@dataclass
class AdamState:
    """Per-parameter Adam moments plus hyperparameters."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_param(cls, param: Tensor, learning_rate: float = 1e-3, **kw) -> "AdamState":
        return cls(
            first_moment=np.zeros(param.size, dtype=np.float64),
            second_moment=np.zeros(param.size, dtype=np.float64),
            learning_rate=learning_rate,
            **kw,
        )


def adam_step(param: Tensor, grad: np.ndarray, state: AdamState) -> None:
    """Standard bias-corrected Adam update, in place on param and state."""
    g = np.asarray(grad).reshape(-1)
    if g.shape[0] != param.size or state.first_moment.shape[0] != param.size:
        raise DimensionError("adam_step: parameter/gradient/moment lengths disagree")
    state.step_count += 1
    flat = param.data.reshape(-1)
    kernels.adam_update(
        flat,
        g.astype(flat.dtype, copy=False),
        state.first_moment,
        state.second_moment,
        float(state.learning_rate),
        float(state.beta1),
        float(state.beta2),
        float(state.epsilon),
        state.step_count,
    )


# Checkpoints: one JSON header line with tensor names/shapes/dtypes, then the
# raw little-endian float32 payloads concatenated in header order.


def save_checkpoint(path, tensors: dict[str, "Tensor | np.ndarray"]) -> None:
    entries = []
    payloads = []
    for name, t in tensors.items():
        arr = t.data if isinstance(t, Tensor) else np.asarray(t)
        payload = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": "float32"})
        payloads.append(payload.tobytes())
    header = json.dumps({"tensors": entries}, separators=(",", ":"))
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(b"\n")
        for p in payloads:
            fh.write(p)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        header = json.loads(header_line.decode("utf-8"))
        out: dict[str, np.ndarray] = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 4)
            if len(raw) != count * 4:
                raise NumericError(f"checkpoint truncated while reading {entry['name']}")
            out[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    return out
