"""Compact BERT-style transformer encoder with [CLS] pooling and an MLM head.

Pre-norm blocks: learned token + position embeddings feed num_layers of
masked multi-head self-attention and a GELU feed-forward, with residuals and
a final layer norm. Padded positions neither attend nor are attended to.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionError, InputError
from .numerics import (
    Tensor,
    add,
    dropout,
    embedding_lookup,
    gather_positions,
    gelu,
    layer_norm,
    matmul,
    reshape,
    scale,
    select_token,
    softmax_rows,
    transpose,
)

_MASK_PENALTY = 1e9  # additive score penalty; exp() underflows to exactly 0


@dataclass
class EncoderConfig:
    vocab_size: int
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 128
    max_positions: int = 32
    dropout_rate: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim % self.num_heads != 0:
            raise InputError("hidden_dim must be divisible by num_heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InputError("dropout_rate must lie in [0, 1)")


@dataclass
class EncoderOutput:
    token_vectors: Tensor  # [B, T, d]
    pooled: Tensor  # [B, d] == token_vectors[:, 0, :]


def init_params(cfg: EncoderConfig, rng: np.random.Generator | None = None, dtype=np.float32) -> dict[str, Tensor]:
    """Fresh parameters: normal(0, 0.02) weights, zero biases, unit LN gains."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    d, f, v = cfg.hidden_dim, cfg.ffn_dim, cfg.vocab_size

    def w(*shape):
        return Tensor((rng.normal(0.0, 0.02, size=shape)).astype(dtype), requires_grad=True)

    def zeros(*shape):
        return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)

    def ones(*shape):
        return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)

    params: dict[str, Tensor] = {
        "embed.tok": w(v, d),
        "embed.pos": w(cfg.max_positions, d),
    }
    for i in range(cfg.num_layers):
        p = f"layer{i}"
        params[f"{p}.ln1.gain"] = ones(d)
        params[f"{p}.ln1.bias"] = zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            params[f"{p}.attn.{name}"] = w(d, d)
        for name in ("bq", "bk", "bv", "bo"):
            params[f"{p}.attn.{name}"] = zeros(d)
        params[f"{p}.ln2.gain"] = ones(d)
        params[f"{p}.ln2.bias"] = zeros(d)
        params[f"{p}.ffn.w1"] = w(d, f)
        params[f"{p}.ffn.b1"] = zeros(f)
        params[f"{p}.ffn.w2"] = w(f, d)
        params[f"{p}.ffn.b2"] = zeros(d)
    params["final_ln.gain"] = ones(d)
    params["final_ln.bias"] = zeros(d)
    params["mlm.w"] = w(d, v)
    params["mlm.b"] = zeros(v)
    return params


def _heads(x: Tensor, B: int, T: int, H: int, hd: int) -> Tensor:
    return transpose(reshape(x, (B, T, H, hd)), (0, 2, 1, 3))


def forward(
    ids: np.ndarray,
    mask: np.ndarray,
    cfg: EncoderConfig,
    params: dict[str, Tensor],
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> EncoderOutput:
    """Encode a padded id batch into contextual vectors and a [CLS] pooled row.

    mode "train" applies dropout (rng required when dropout_rate > 0);
    "eval" is deterministic.
    """
    if mode not in ("train", "eval"):
        raise InputError(f"mode must be 'train' or 'eval', got {mode!r}")
    ids = np.asarray(ids, dtype=np.int64)
    mask = np.asarray(mask)
    B, T = ids.shape
    if T > cfg.max_positions:
        raise DimensionError(f"sequence length {T} exceeds max_positions {cfg.max_positions}")
    rate = cfg.dropout_rate if mode == "train" else 0.0
    if rate > 0.0 and rng is None:
        raise InputError("train-mode forward needs an rng for dropout")

    d, H = cfg.hidden_dim, cfg.num_heads
    hd = d // H
    dtype = params["embed.tok"].dtype

    x = add(embedding_lookup(params["embed.tok"], ids), embedding_lookup(params["embed.pos"], np.arange(T)))
    x = dropout(x, rate, rng)

    # keys at padded positions score -1e9 before softmax, so their attention
    # weight underflows to exactly zero for every query
    additive = ((mask.astype(dtype) - 1.0) * _MASK_PENALTY).reshape(B, 1, 1, T)

    for i in range(cfg.num_layers):
        p = f"layer{i}"
        h = layer_norm(x, params[f"{p}.ln1.gain"], params[f"{p}.ln1.bias"])
        q = _heads(add(matmul(h, params[f"{p}.attn.wq"]), params[f"{p}.attn.bq"]), B, T, H, hd)
        k = _heads(add(matmul(h, params[f"{p}.attn.wk"]), params[f"{p}.attn.bk"]), B, T, H, hd)
        v = _heads(add(matmul(h, params[f"{p}.attn.wv"]), params[f"{p}.attn.bv"]), B, T, H, hd)
        scores = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(hd))
        probs = softmax_rows(add(scores, additive))
        ctx = reshape(transpose(matmul(probs, v), (0, 2, 1, 3)), (B, T, d))
        attn_out = add(matmul(ctx, params[f"{p}.attn.wo"]), params[f"{p}.attn.bo"])
        x = add(x, dropout(attn_out, rate, rng))

        h2 = layer_norm(x, params[f"{p}.ln2.gain"], params[f"{p}.ln2.bias"])
        ffn = add(matmul(gelu(add(matmul(h2, params[f"{p}.ffn.w1"]), params[f"{p}.ffn.b1"])), params[f"{p}.ffn.w2"]), params[f"{p}.ffn.b2"])
        x = add(x, dropout(ffn, rate, rng))

    x = layer_norm(x, params["final_ln.gain"], params["final_ln.bias"])
    return EncoderOutput(token_vectors=x, pooled=select_token(x, 0))


def mlm_logits(token_vectors: Tensor, positions: Sequence[tuple[int, int]], params: dict[str, Tensor]) -> Tensor:
    """Project selected token vectors to vocabulary logits: [n, V]."""
    picked = gather_positions(token_vectors, positions)
    return add(matmul(picked, params["mlm.w"]), params["mlm.b"])
