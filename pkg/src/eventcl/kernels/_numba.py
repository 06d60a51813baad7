"""Numba-jitted kernels: same math as ``_numpy``, fused into single loops.

Each kernel avoids the temporaries the vectorized path allocates; at the
batch sizes this package trains at, the win is mostly allocation and
multi-pass traffic, not raw FLOPs (matmul stays on BLAS either way).
fastmath stays off so results track the numpy path closely.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_GELU_C0 = 0.7978845608028654
_GELU_C1 = 0.044715


@njit(cache=True)
def layer_norm_forward(x, gain, bias, eps):
    n, d = x.shape
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    rstd = np.empty(n, dtype=x.dtype)
    for i in range(n):
        mean = 0.0
        for j in range(d):
            mean += x[i, j]
        mean /= d
        var = 0.0
        for j in range(d):
            c = x[i, j] - mean
            var += c * c
        var /= d
        r = 1.0 / math.sqrt(var + eps)
        rstd[i] = r
        for j in range(d):
            h = (x[i, j] - mean) * r
            xhat[i, j] = h
            y[i, j] = h * gain[j] + bias[j]
    return y, xhat, rstd


@njit(cache=True)
def layer_norm_backward_input(dy, xhat, rstd, gain):
    n, d = dy.shape
    dx = np.empty_like(dy)
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            g = dy[i, j] * gain[j]
            m1 += g
            m2 += g * xhat[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            g = dy[i, j] * gain[j]
            dx[i, j] = rstd[i] * (g - m1 - xhat[i, j] * m2)
    return dx


@njit(cache=True)
def softmax_forward(x):
    n, d = x.shape
    y = np.empty_like(x)
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, d):
            if x[i, j] > mx:
                mx = x[i, j]
        total = 0.0
        for j in range(d):
            e = math.exp(x[i, j] - mx)
            y[i, j] = e
            total += e
        for j in range(d):
            y[i, j] /= total
    return y


@njit(cache=True)
def softmax_backward(dy, y):
    n, d = dy.shape
    dx = np.empty_like(dy)
    for i in range(n):
        inner = 0.0
        for j in range(d):
            inner += dy[i, j] * y[i, j]
        for j in range(d):
            dx[i, j] = y[i, j] * (dy[i, j] - inner)
    return dx


@njit(cache=True)
def gelu_forward(x):
    flat = x.ravel()
    out = np.empty_like(flat)
    for i in range(flat.size):
        v = flat[i]
        u = _GELU_C0 * (v + _GELU_C1 * v * v * v)
        out[i] = 0.5 * v * (1.0 + math.tanh(u))
    return out.reshape(x.shape)


@njit(cache=True)
def gelu_backward(dy, x):
    flat_x = x.ravel()
    flat_dy = dy.ravel()
    out = np.empty_like(flat_dy)
    for i in range(flat_x.size):
        v = flat_x[i]
        u = _GELU_C0 * (v + _GELU_C1 * v * v * v)
        t = math.tanh(u)
        du = _GELU_C0 * (1.0 + 3.0 * _GELU_C1 * v * v)
        out[i] = flat_dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du)
    return out.reshape(dy.shape)


@njit(cache=True)
def adam_update(param, grad, m, v, lr, beta1, beta2, eps, step):
    c1 = 1.0 - beta1**step
    c2 = 1.0 - beta2**step
    for i in range(param.size):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        mhat = m[i] / c1
        vhat = v[i] / c2
        param[i] -= lr * mhat / (math.sqrt(vhat) + eps)


@njit(cache=True)
def embedding_grad(ids, dy, table_grad):
    n, d = dy.shape
    for i in range(n):
        row = ids[i]
        for j in range(d):
            table_grad[row, j] += dy[i, j]
