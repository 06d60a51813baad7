"""Independent oracles and checking utilities shared by the test modules.

Everything here is deliberately written the dumb way (plain loops, direct
formulas) so it stays independent of the library code it checks.
"""

from __future__ import annotations

import math

import numpy as np

from eventcl.numerics import Tensor


def assert_grads_close(analytic, numeric, tol=1e-3, floor=1e-6):
    """Element-wise relative-error check between backprop and finite diffs."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    err = np.abs(a - n) / np.maximum(np.abs(n), floor)
    assert err.max() <= tol, f"max relative gradient error {err.max():.3e} exceeds {tol}"


def sampled_coordinate_fd(loss_fn, params: dict[str, Tensor], coords_per_param: int, h: float, seed: int) -> float:
    """Finite-difference a loss over sampled coordinates of every parameter
    tensor; returns the worst relative error against stored .grad."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idxs = rng.choice(flat.size, size=min(coords_per_param, flat.size), replace=False)
        grad = p.grad.reshape(-1) if p.grad is not None else np.zeros_like(flat)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = loss_fn()
            flat[i] = orig - h
            f_minus = loss_fn()
            flat[i] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            err = abs(grad[i] - fd) / max(abs(fd), 1e-6)
            worst = max(worst, err)
    return worst


def brute_contrastive(anchors, pos1, pos2, tau: float) -> float:
    """Dual-positive InfoNCE by nested loops over i, alpha, and negatives."""

    def unit(v):
        n = math.sqrt(sum(x * x for x in v))
        return [x / n for x in v]

    def g(u, v):
        return math.exp(sum(a * b for a, b in zip(unit(u), unit(v))) / tau)

    B = len(anchors)
    total = 0.0
    for i in range(B):
        negs = sum(g(anchors[i], anchors[k]) for k in range(B) if k != i)
        for alpha in (pos1[i], pos2[i]):
            num = g(anchors[i], alpha)
            total += -math.log(num / (num + negs))
    return total / B


def ref_sinkhorn(scores, eps: float, iters: int) -> np.ndarray:
    """Multiplicative Sinkhorn (no log-space tricks): columns to B/K, rows to 1."""
    Q = np.exp(np.asarray(scores, dtype=np.float64) / eps)
    B, K = Q.shape
    for _ in range(iters):
        Q = Q / Q.sum(axis=0, keepdims=True) * (B / K)
        Q = Q / Q.sum(axis=1, keepdims=True)
    return Q


def ref_prototype_loss(pos1, pos2, protos, tau: float, eps: float, iters: int) -> float:
    """Straight-line swapped-prediction composition: sinkhorn + softmax + CE."""

    def unit_rows(M):
        M = np.asarray(M, dtype=np.float64)
        return M / np.linalg.norm(M, axis=1, keepdims=True)

    def softmax(M):
        e = np.exp(M - M.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    z1, z2, C = unit_rows(pos1), unit_rows(pos2), unit_rows(protos)
    q1 = ref_sinkhorn(z1 @ C.T, eps, iters)
    q2 = ref_sinkhorn(z2 @ C.T, eps, iters)
    p1 = softmax(z1 @ C.T / tau)
    p2 = softmax(z2 @ C.T / tau)

    def ce(q, p):
        return float(np.mean(-(q * np.log(p)).sum(axis=1)))

    return 0.5 * (ce(q1, p2) + ce(q2, p1))


def rank_then_pearson(x, y) -> float:
    """Spearman rho the long way: average ranks, then a Pearson correlation."""

    def average_ranks(v):
        v = np.asarray(v, dtype=np.float64)
        order = np.argsort(v, kind="stable")
        ranks = np.empty(len(v), dtype=np.float64)
        i = 0
        while i < len(v):
            j = i
            while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
                j += 1
            ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
            i = j + 1
        return ranks

    rx, ry = average_ranks(x), average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float((rx * rx).sum()) * float((ry * ry).sum()))
    if denom == 0.0:
        raise ZeroDivisionError("constant ranks")
    return float((rx * ry).sum() / denom)


def ref_adam_sequence(theta0, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Replay the Adam recurrence directly; returns parameter after each step."""
    theta = np.asarray(theta0, dtype=np.float64).copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    history = []
    for t, g in enumerate(grads, start=1):
        g = np.asarray(g, dtype=np.float64)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
        history.append(theta.copy())
    return history
