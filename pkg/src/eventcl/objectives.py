"""The composite training objective: dual-positive contrastive loss,
whole-component masked-language-modeling loss, and a prototype-clustering
loss with Sinkhorn-balanced swapped-prediction targets.

All similarities are cosine: vectors are L2-normalized inside each loss, so
positive rescaling of any embedding never changes a value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import encoder as encoder_mod
from .errors import InputError, NumericError
from .numerics import (
    Tensor,
    add,
    cross_entropy_logits,
    exp,
    l2_normalize_rows,
    log,
    log_softmax_rows,
    matmul,
    mul,
    scale,
    slice_rows,
    tmean,
    transpose,
    tsum,
)


@dataclass
class ObjectiveConfig:
    """Loss hyperparameters: temperature, prototype bank size, Sinkhorn
    settings, and the three term weights."""

    temperature: float = 0.3
    prototype_count: int = 8
    sinkhorn_iters: int = 3
    sinkhorn_epsilon: float = 0.05
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)  # (contrastive, mlm, prototype)

    def __post_init__(self):
        if self.temperature <= 0:
            raise InputError("temperature must be positive")
        if self.prototype_count < 1:
            raise InputError("prototype_count must be >= 1")
        if self.sinkhorn_iters < 1:
            raise InputError("sinkhorn_iters must be >= 1")
        if any(w < 0 for w in self.loss_weights):
            raise InputError("loss weights must be non-negative")


@dataclass
class PrototypeBank:
    """Learned cluster centers; rows are kept at unit norm between steps."""

    prototypes: Tensor

    @classmethod
    def init(cls, count: int, dim: int, rng: np.random.Generator, dtype=np.float32) -> "PrototypeBank":
        raw = rng.normal(0.0, 1.0, size=(count, dim)).astype(dtype)
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        return cls(prototypes=Tensor(raw, requires_grad=True))

    def renormalize(self) -> None:
        norms = np.linalg.norm(self.prototypes.data, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise NumericError("prototype row collapsed to zero norm")
        self.prototypes.data /= norms


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise NumericError("cannot normalize a zero-norm vector")
    return v / n


def sim_g(h_a: np.ndarray, h_b: np.ndarray, temperature: float) -> float:
    """exp(cos(h_a, h_b) / temperature); inputs are normalized internally."""
    if temperature <= 0:
        raise InputError("temperature must be positive")
    return float(np.exp(np.dot(_unit(np.asarray(h_a, dtype=np.float64)), _unit(np.asarray(h_b, dtype=np.float64))) / temperature))


def contrastive_loss(anchors: Tensor, pos1: Tensor, pos2: Tensor, temperature: float) -> Tensor:
    """Dual-positive InfoNCE over in-batch negatives.

    Each anchor i is scored against its two augmented views and against every
    other anchor in the batch; the two positive terms are summed and the
    result averaged over the batch. Cosine inputs keep exp() in range, so no
    log-sum-exp shift is needed.
    """
    B = anchors.shape[0]
    if B == 0:
        raise InputError("contrastive_loss needs a non-empty batch")
    if pos1.shape != anchors.shape or pos2.shape != anchors.shape:
        raise InputError("anchors and positives must share shape [B, d]")
    inv_t = 1.0 / temperature
    a = l2_normalize_rows(anchors)
    p1 = l2_normalize_rows(pos1)
    p2 = l2_normalize_rows(pos2)

    neg = scale(matmul(a, transpose(a, (1, 0))), inv_t)  # [B, B] anchor-anchor
    off_diag = (1.0 - np.eye(B, dtype=anchors.dtype.type))
    denom_negs = tsum(mul(exp(neg), off_diag), axis=1)  # [B]

    loss_terms = []
    for p in (p1, p2):
        s = scale(tsum(mul(a, p), axis=1), inv_t)  # [B]
        # -log( e^s / (e^s + sum_negs) ) == log(e^s + sum_negs) - s
        loss_terms.append(add(log(add(exp(s), denom_negs)), scale(s, -1.0)))
    return tmean(add(loss_terms[0], loss_terms[1]))


def event_mlm_loss(masked_batch, cfg: encoder_mod.EncoderConfig, params: dict[str, Tensor], mode: str = "train", rng=None) -> Tensor:
    """Cross-entropy over all masked positions in the batch, averaged per
    masked token. ``masked_batch`` carries ids, mask, flat (b, t) positions,
    and the original target ids."""
    if not masked_batch.positions:
        raise InputError("event_mlm_loss needs at least one masked position")
    out = encoder_mod.forward(masked_batch.ids, masked_batch.mask, cfg, params, mode=mode, rng=rng)
    logits = encoder_mod.mlm_logits(out.token_vectors, masked_batch.positions, params)
    return cross_entropy_logits(logits, masked_batch.target_ids)


def sinkhorn_assign(scores: np.ndarray, epsilon: float, iters: int) -> np.ndarray:
    """Balanced soft assignments from a [B, K] score matrix.

    Starts from exp(scores/epsilon); each iteration normalizes columns to sum
    B/K, then rows to sum 1. Runs in log space, returns plain probabilities.
    """
    final, _ = _sinkhorn_log(np.asarray(scores, dtype=np.float64), epsilon, iters)
    return np.exp(final)


def _sinkhorn_log(scores: np.ndarray, epsilon: float, iters: int) -> tuple[np.ndarray, np.ndarray]:
    """Log-domain Sinkhorn loop; also returns the iterate right after the
    final column pass (before its row pass), whose columns sum to B/K."""
    if scores.ndim != 2 or scores.size == 0:
        raise InputError("sinkhorn_assign needs a non-empty [B, K] matrix")
    if epsilon <= 0 or iters < 1:
        raise InputError("sinkhorn_assign needs epsilon > 0 and iters >= 1")
    B, K = scores.shape
    log_q = scores / epsilon
    log_col_target = np.log(B / K)
    pre_row = log_q
    for _ in range(iters):
        log_q = log_q - logsumexp(log_q, axis=0, keepdims=True) + log_col_target
        pre_row = log_q
        log_q = log_q - logsumexp(log_q, axis=1, keepdims=True)
    return log_q, pre_row


def prototype_loss(
    pos1: Tensor,
    pos2: Tensor,
    bank: PrototypeBank,
    cfg: ObjectiveConfig,
    targets: tuple[np.ndarray, np.ndarray] | None = None,
) -> Tensor:
    """Swapped-prediction clustering loss.

    Sinkhorn targets q are computed from one view's prototype scores and held
    constant; the other view predicts them through a temperature softmax.
    Gradients reach the encoder and the prototypes only through the
    predictions. ``targets`` overrides the computed (q1, q2), which is what a
    finite-difference check needs to freeze the gradient-stopped part.
    """
    B = pos1.shape[0]
    if B < 2:
        raise InputError("prototype_loss needs a batch of at least 2")
    if pos2.shape != pos1.shape:
        raise InputError("the two views must share shape [B, d]")
    z1 = l2_normalize_rows(pos1)
    z2 = l2_normalize_rows(pos2)
    protos = l2_normalize_rows(bank.prototypes)

    if targets is None:
        # gradient-stopped: computed on raw arrays, used as constants
        q1 = sinkhorn_assign(z1.data @ protos.data.T, cfg.sinkhorn_epsilon, cfg.sinkhorn_iters)
        q2 = sinkhorn_assign(z2.data @ protos.data.T, cfg.sinkhorn_epsilon, cfg.sinkhorn_iters)
    else:
        q1, q2 = targets

    inv_t = 1.0 / cfg.temperature
    log_p1 = log_softmax_rows(scale(matmul(z1, transpose(protos, (1, 0))), inv_t))
    log_p2 = log_softmax_rows(scale(matmul(z2, transpose(protos, (1, 0))), inv_t))

    ce_q1_p2 = scale(tmean(tsum(mul(log_p2, q1.astype(pos1.dtype)), axis=1)), -1.0)
    ce_q2_p1 = scale(tmean(tsum(mul(log_p1, q2.astype(pos1.dtype)), axis=1)), -1.0)
    return scale(add(ce_q1_p2, ce_q2_p1), 0.5)


def overall_loss(batch, params: dict[str, Tensor], bank: PrototypeBank, enc_cfg: encoder_mod.EncoderConfig, obj_cfg: ObjectiveConfig, mode: str = "train", rng=None) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of the three terms on a prepared training batch.

    The needed views (anchor, two positives, masked variant) run through one
    concatenated encoder forward; all layers act per row, so this matches
    separate forwards while paying the graph overhead once. Zero-weight terms
    are skipped entirely (their parameters see no gradient). Returns the
    total and a per-term breakdown for logging.
    """
    w_cl, w_mlm, w_cp = obj_cfg.loss_weights
    total: Tensor | None = None
    breakdown = {"contrastive": 0.0, "mlm": 0.0, "prototype": 0.0}

    ids_parts, mask_parts = [], []
    need_views = w_cl > 0 or w_cp > 0
    if need_views:
        ids_parts += [batch.anchor_ids, batch.pos1_ids, batch.pos2_ids]
        mask_parts += [batch.anchor_mask, batch.pos1_mask, batch.pos2_mask]
    if w_mlm > 0:
        if not batch.masked.positions:
            raise InputError("event_mlm_loss needs at least one masked position")
        ids_parts.append(batch.masked.ids)
        mask_parts.append(batch.masked.mask)
    if not ids_parts:
        raise InputError("all loss weights are zero; nothing to optimize")

    out = encoder_mod.forward(np.concatenate(ids_parts), np.concatenate(mask_parts), enc_cfg, params, mode=mode, rng=rng)

    anchors = pos1 = pos2 = None
    if need_views:
        B = batch.anchor_ids.shape[0]
        anchors = slice_rows(out.pooled, 0, B)
        pos1 = slice_rows(out.pooled, B, 2 * B)
        pos2 = slice_rows(out.pooled, 2 * B, 3 * B)

    if w_cl > 0:
        cl = contrastive_loss(anchors, pos1, pos2, obj_cfg.temperature)
        breakdown["contrastive"] = cl.item()
        total = scale(cl, w_cl)
    if w_mlm > 0:
        row_offset = 3 * batch.anchor_ids.shape[0] if need_views else 0
        positions = [(row_offset + b, t) for b, t in batch.masked.positions]
        logits = encoder_mod.mlm_logits(out.token_vectors, positions, params)
        mlm = cross_entropy_logits(logits, batch.masked.target_ids)
        breakdown["mlm"] = mlm.item()
        term = scale(mlm, w_mlm)
        total = term if total is None else add(total, term)
    if w_cp > 0:
        cp = prototype_loss(pos1, pos2, bank, obj_cfg)
        breakdown["prototype"] = cp.item()
        term = scale(cp, w_cp)
        total = term if total is None else add(total, term)
    return total, breakdown
