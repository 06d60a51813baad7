"""Training loop: batch assembly, optimization, checkpointing, and the
ablation switches.

Each batch item contributes four encodings of one event: a plain anchor, two
independently prompt-augmented positives, and a component-masked variant for
the MLM term. Everything is driven by one seeded generator, so a (seed,
config, corpus) triple reproduces checkpoints bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import encoder as encoder_mod
from . import objectives
from .augment import Event, PromptConfig, draw_component, event_mask, make_dual_positives, render, template_tokens
from .errors import InputError, NumericError, TruncationError
from .numerics import AdamState, Tensor, adam_step, save_checkpoint, zero_grads
from .text import Vocabulary, build_vocab, encode, pad_batch

log = logging.getLogger("eventcl.trainer")


@dataclass
class TrainConfig:
    """Flat run settings; every field is a config-file key and a CLI flag."""

    # optimization
    batch_size: int = 32
    learning_rate: float = 1e-3
    epochs: int = 5
    steps: int | None = None  # explicit cap; overrides epochs when set
    warmup_fraction: float = 0.05
    seed: int = 0
    min_count: int = 1
    checkpoint_every: int = 0  # 0: only at the end
    # objective
    pi: float = 0.2
    tau: float = 0.3
    template_id: str = "is_labels"
    word_order: str = "SPO"
    enable_prompt: bool = True
    enable_mlm: bool = True
    enable_cp: bool = True
    prototype_count: int = 8
    sinkhorn_iters: int = 3
    sinkhorn_epsilon: float = 0.05
    w_cl: float = 1.0
    w_mlm: float = 1.0
    w_cp: float = 1.0
    # encoder
    hidden_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 128
    max_positions: int = 32
    dropout_rate: float = 0.1

    def __post_init__(self):
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise InputError("steps must be >= 1")
        if not 0.0 <= self.pi <= 1.0:
            raise InputError("pi must lie in [0, 1]")
        if self.tau <= 0:
            raise InputError("tau must be positive")

    def effective_pi(self) -> float:
        return self.pi if self.enable_prompt else 0.0

    def objective_config(self) -> objectives.ObjectiveConfig:
        return objectives.ObjectiveConfig(
            temperature=self.tau,
            prototype_count=self.prototype_count,
            sinkhorn_iters=self.sinkhorn_iters,
            sinkhorn_epsilon=self.sinkhorn_epsilon,
            loss_weights=(
                self.w_cl,
                self.w_mlm if self.enable_mlm else 0.0,
                self.w_cp if self.enable_cp else 0.0,
            ),
        )

    def encoder_config(self, vocab_size: int) -> encoder_mod.EncoderConfig:
        return encoder_mod.EncoderConfig(
            vocab_size=vocab_size,
            hidden_dim=self.hidden_dim,
            num_layers=self.num_layers,
            num_heads=self.num_heads,
            ffn_dim=self.ffn_dim,
            max_positions=self.max_positions,
            dropout_rate=self.dropout_rate,
            seed=self.seed,
        )


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def _coerce_value(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise InputError(f"unknown config key {key!r}")
    raw = raw.strip()
    ftype = _FIELD_TYPES[key]
    if ftype == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise InputError(f"config key {key!r} expects a boolean, got {raw!r}")
    if ftype == "int":
        return int(raw)
    if ftype == "int | None":
        return None if raw.lower() in ("none", "") else int(raw)
    if ftype == "float":
        return float(raw)
    return raw


def load_train_config(path, overrides: dict | None = None) -> TrainConfig:
    """Flat ``key = value`` lines; '#' starts a comment; overrides win."""
    values: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in line.split("=", 1))
            values[key] = _coerce_value(key, raw)
    if overrides:
        values.update(overrides)
    return TrainConfig(**values)


def save_train_config(path, cfg: TrainConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in dataclasses.fields(TrainConfig):
            value = getattr(cfg, f.name)
            fh.write(f"{f.name} = {'none' if value is None else value}\n")


@dataclass
class MaskedBatch:
    ids: np.ndarray
    mask: np.ndarray
    positions: list[tuple[int, int]]
    target_ids: list[int]


@dataclass
class TrainingBatch:
    events: list[Event]
    anchor_ids: np.ndarray
    anchor_mask: np.ndarray
    pos1_ids: np.ndarray
    pos1_mask: np.ndarray
    pos2_ids: np.ndarray
    pos2_mask: np.ndarray
    masked: MaskedBatch


def build_batch(events: list[Event], cfg: TrainConfig, vocab: Vocabulary, rng: np.random.Generator) -> TrainingBatch:
    """Anchor, dual positives, and masked variant per event, padded together."""
    order = cfg.word_order
    prompt_cfg = PromptConfig(insertion_probability=cfg.effective_pi(), template_id=cfg.template_id, rng_seed=cfg.seed)

    anchor_seqs, pos1_seqs, pos2_seqs, masked_seqs = [], [], [], []
    positions: list[tuple[int, int]] = []
    target_ids: list[int] = []
    for b, e in enumerate(events):
        anchor_seqs.append(encode(render(e, order), vocab))
        text1, text2 = make_dual_positives(e, prompt_cfg, rng, order)
        pos1_seqs.append(encode(text1, vocab))
        pos2_seqs.append(encode(text2, vocab))
        masked, targets = event_mask(e, draw_component(rng), vocab, order)
        masked_seqs.append(masked)
        positions.extend((b, p) for p, _ in targets)
        target_ids.extend(t for _, t in targets)

    max_len = max(len(s) for group in (anchor_seqs, pos1_seqs, pos2_seqs, masked_seqs) for s in group)
    if max_len > cfg.max_positions:
        raise TruncationError(f"batch needs length {max_len} but max_positions is {cfg.max_positions}")
    anchor_ids, anchor_mask = pad_batch(anchor_seqs, max_len)
    pos1_ids, pos1_mask = pad_batch(pos1_seqs, max_len)
    pos2_ids, pos2_mask = pad_batch(pos2_seqs, max_len)
    m_ids, m_mask = pad_batch(masked_seqs, max_len)
    return TrainingBatch(
        events=list(events),
        anchor_ids=anchor_ids,
        anchor_mask=anchor_mask,
        pos1_ids=pos1_ids,
        pos1_mask=pos1_mask,
        pos2_ids=pos2_ids,
        pos2_mask=pos2_mask,
        masked=MaskedBatch(ids=m_ids, mask=m_mask, positions=positions, target_ids=target_ids),
    )


@dataclass
class TrainResult:
    checkpoint_path: Path
    vocab_path: Path
    metrics_path: Path
    config_path: Path
    encoder_config: encoder_mod.EncoderConfig
    params: dict[str, Tensor]
    bank: objectives.PrototypeBank
    vocab: Vocabulary
    steps_run: int
    first_loss: float
    final_loss: float


def _dump_diagnostics(out_dir: Path, step: int, batch: TrainingBatch, breakdown: dict) -> Path:
    path = out_dir / "diagnostic_dump.json"
    payload = {
        "step": step,
        "breakdown": breakdown,
        "events": [{"subject": e.subject, "predicate": e.predicate, "object": e.object} for e in batch.events],
        "anchor_ids": batch.anchor_ids.tolist(),
        "masked_ids": batch.masked.ids.tolist(),
        "mlm_targets": batch.masked.target_ids,
    }
    path.write_text(json.dumps(payload, indent=2))
    return path


def train(corpus: list[Event], cfg: TrainConfig, out_dir) -> TrainResult:
    """Optimize the composite objective over shuffled full batches.

    Writes checkpoint.bin (encoder parameters plus the prototype bank),
    vocab.txt, the resolved config, and one JSON metrics line per step.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if len(corpus) < cfg.batch_size:
        raise InputError(f"corpus has {len(corpus)} events; batch_size is {cfg.batch_size}")

    seed_seq = np.random.SeedSequence(cfg.seed)
    init_ss, bank_ss, train_ss = seed_seq.spawn(3)
    vocab = build_vocab(corpus, min_count=cfg.min_count, extra_tokens=template_tokens(cfg.template_id))
    enc_cfg = cfg.encoder_config(len(vocab))
    params = encoder_mod.init_params(enc_cfg, np.random.default_rng(init_ss))
    bank = objectives.PrototypeBank.init(cfg.prototype_count, cfg.hidden_dim, np.random.default_rng(bank_ss))
    obj_cfg = cfg.objective_config()
    rng = np.random.default_rng(train_ss)

    batches_per_epoch = len(corpus) // cfg.batch_size
    total_steps = cfg.steps if cfg.steps is not None else cfg.epochs * batches_per_epoch
    if total_steps < 1:
        raise InputError("configuration yields zero training steps")
    warmup_steps = max(1, int(round(cfg.warmup_fraction * total_steps)))

    states = {name: AdamState.for_param(p, learning_rate=cfg.learning_rate) for name, p in params.items()}
    states["prototypes"] = AdamState.for_param(bank.prototypes, learning_rate=cfg.learning_rate)

    metrics_path = out_dir / "metrics.jsonl"
    checkpoint_path = out_dir / "checkpoint.bin"
    first_loss = final_loss = float("nan")
    step = 0
    indices = np.arange(len(corpus))

    with open(metrics_path, "w", encoding="utf-8") as metrics_fh:
        while step < total_steps:
            rng.shuffle(indices)
            for start in range(0, batches_per_epoch * cfg.batch_size, cfg.batch_size):
                if step >= total_steps:
                    break
                step += 1
                batch_events = [corpus[i] for i in indices[start : start + cfg.batch_size]]
                batch = build_batch(batch_events, cfg, vocab, rng)
                lr = cfg.learning_rate * min(1.0, step / warmup_steps)

                total, breakdown = objectives.overall_loss(batch, params, bank, enc_cfg, obj_cfg, mode="train", rng=rng)
                loss_value = total.item()
                if not np.isfinite(loss_value):
                    dump = _dump_diagnostics(out_dir, step, batch, breakdown)
                    raise NumericError(f"non-finite loss at step {step}; offending batch dumped to {dump}")

                zero_grads(params.values())
                bank.prototypes.grad = None
                total.backward()
                for name, p in params.items():
                    if p.grad is not None:
                        states[name].learning_rate = lr
                        adam_step(p, p.grad, states[name])
                if bank.prototypes.grad is not None:
                    states["prototypes"].learning_rate = lr
                    adam_step(bank.prototypes, bank.prototypes.grad, states["prototypes"])
                    bank.renormalize()

                if step == 1:
                    first_loss = loss_value
                final_loss = loss_value
                record = {
                    "step": step,
                    "loss": loss_value,
                    "contrastive": breakdown["contrastive"],
                    "mlm": breakdown["mlm"],
                    "prototype": breakdown["prototype"],
                    "lr": lr,
                }
                metrics_fh.write(json.dumps(record) + "\n")
                if step % 100 == 0 or step == total_steps:
                    log.info("step %d/%d loss %.4f", step, total_steps, loss_value)
                if cfg.checkpoint_every and step % cfg.checkpoint_every == 0 and step < total_steps:
                    _save(checkpoint_path.with_name(f"checkpoint_step{step}.bin"), params, bank)

    _save(checkpoint_path, params, bank)
    vocab_path = out_dir / "vocab.txt"
    vocab.save(vocab_path)
    config_path = out_dir / "config.cfg"
    save_train_config(config_path, cfg)
    return TrainResult(
        checkpoint_path=checkpoint_path,
        vocab_path=vocab_path,
        metrics_path=metrics_path,
        config_path=config_path,
        encoder_config=enc_cfg,
        params=params,
        bank=bank,
        vocab=vocab,
        steps_run=step,
        first_loss=first_loss,
        final_loss=final_loss,
    )


def _save(path: Path, params: dict[str, Tensor], bank: objectives.PrototypeBank) -> None:
    tensors: dict[str, Tensor] = dict(params)
    tensors["prototypes"] = bank.prototypes
    save_checkpoint(path, tensors)


def load_run(run_dir) -> tuple[encoder_mod.EncoderConfig, dict[str, Tensor], objectives.PrototypeBank, Vocabulary, TrainConfig]:
    """Rehydrate a finished run directory for evaluation."""
    run_dir = Path(run_dir)
    cfg = load_train_config(run_dir / "config.cfg")
    vocab = Vocabulary.load(run_dir / "vocab.txt")
    from .numerics import load_checkpoint

    arrays = load_checkpoint(run_dir / "checkpoint.bin")
    protos = arrays.pop("prototypes")
    params = {name: Tensor(arr) for name, arr in arrays.items()}
    bank = objectives.PrototypeBank(Tensor(protos))
    return cfg.encoder_config(len(vocab)), params, bank, vocab, cfg
