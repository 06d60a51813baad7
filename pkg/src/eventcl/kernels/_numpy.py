"""Pure-numpy kernel implementations.

Reference path for the hot per-row / per-element operations. The numba
backend in ``_numba.py`` implements the same math with fused loops; both
must stay numerically interchangeable (same formulas, same epsilon
placement), since tests compare them directly.
"""

from __future__ import annotations

import numpy as np

# tanh-approximation GELU constants
_GELU_C0 = 0.7978845608028654  # sqrt(2/pi)
_GELU_C1 = 0.044715


def layer_norm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float):
    """Row-wise layer norm over the last axis of a 2-d array.

    Returns (y, xhat, rstd) where xhat is the normalized input and rstd the
    per-row reciprocal of sqrt(var + eps), both needed by the backward pass.
    """
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    y = xhat * gain + bias
    return y.astype(x.dtype, copy=False), xhat.astype(x.dtype, copy=False), rstd[:, 0].astype(x.dtype, copy=False)


def layer_norm_backward_input(dy: np.ndarray, xhat: np.ndarray, rstd: np.ndarray, gain: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the layer-norm input (gain/bias grads are plain sums)."""
    dyg = dy * gain
    m1 = dyg.mean(axis=1, keepdims=True)
    m2 = (dyg * xhat).mean(axis=1, keepdims=True)
    dx = rstd[:, None] * (dyg - m1 - xhat * m2)
    return dx.astype(dy.dtype, copy=False)


def softmax_forward(x: np.ndarray) -> np.ndarray:
    """Numerically stable row-wise softmax of a 2-d array."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=1, keepdims=True)).astype(x.dtype, copy=False)


def softmax_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    """dx = y * (dy - sum(dy * y, axis=1)) for y = softmax(x)."""
    inner = (dy * y).sum(axis=1, keepdims=True)
    return (y * (dy - inner)).astype(dy.dtype, copy=False)


def gelu_forward(x: np.ndarray) -> np.ndarray:
    """GELU, tanh approximation."""
    u = _GELU_C0 * (x + _GELU_C1 * x * x * x)
    return (0.5 * x * (1.0 + np.tanh(u))).astype(x.dtype, copy=False)


def gelu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    u = _GELU_C0 * (x + _GELU_C1 * x * x * x)
    t = np.tanh(u)
    du = _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * x * x)
    grad = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
    return (dy * grad).astype(dy.dtype, copy=False)


def adam_update(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
    step: int,
) -> None:
    """One bias-corrected Adam step, in place on param/m/v (flat arrays).

    Moment math runs in the moments' dtype (float64) regardless of the
    parameter dtype, matching the numba kernel's promotion behavior.
    """
    g = grad.astype(m.dtype, copy=False)
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**step)
    vhat = v / (1.0 - beta2**step)
    param -= (lr * mhat / (np.sqrt(vhat) + eps)).astype(param.dtype, copy=False)


def embedding_grad(ids: np.ndarray, dy: np.ndarray, table_grad: np.ndarray) -> None:
    """Scatter-add dy rows into table_grad at the given ids, in place."""
    np.add.at(table_grad, ids, dy)
