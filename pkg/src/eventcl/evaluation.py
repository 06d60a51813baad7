"""Evaluation protocols: hard-similarity accuracy, transitive Spearman
correlation, zero-shot narrative-cloze accuracy, alignment/uniformity
diagnostics, and a per-pair cosine dump.

Every metric consumes an "embedder": anything with ``embed_many(events) ->
[n, d] array``. Embeddings are re-normalized to unit length on entry, so all
scores are genuine cosines and positive rescaling can never move a metric.
The bundled ``EventEncoder`` wraps a trained checkpoint; tests substitute
hand-built embedders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from . import encoder as encoder_mod
from .augment import SPO, Event, render
from .data import HardPair, McncInstance, TransitivePair
from .errors import InputError, NumericError
from .text import Vocabulary, encode, pad_batch

METRIC_KEYS = ("original_acc", "extended_acc", "transitive_rho", "mcnc_acc", "align", "uniform")


class EventEncoder:
    """Eval-mode embedder: plain SPO encoding, [CLS] pooling, unit norm."""

    def __init__(self, cfg: encoder_mod.EncoderConfig, params: dict, vocab: Vocabulary, batch_size: int = 256):
        self.cfg = cfg
        self.params = params
        self.vocab = vocab
        self.batch_size = batch_size

    def embed_many(self, events: Sequence[Event]) -> np.ndarray:
        vecs = []
        for start in range(0, len(events), self.batch_size):
            chunk = events[start : start + self.batch_size]
            seqs = [encode(render(e, SPO), self.vocab) for e in chunk]
            ids, mask = pad_batch(seqs, max(len(s) for s in seqs))
            out = encoder_mod.forward(ids, mask, self.cfg, self.params, mode="eval")
            vecs.append(out.pooled.data)
        return _unit_rows(np.concatenate(vecs, axis=0))

    def embed(self, event: Event) -> np.ndarray:
        return self.embed_many([event])[0]


def embed(event: Event, cfg: encoder_mod.EncoderConfig, params: dict, vocab: Vocabulary) -> np.ndarray:
    """One event to one unit vector."""
    return EventEncoder(cfg, params, vocab).embed(event)


def _unit_rows(M: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(M, axis=1, keepdims=True)
    if np.any(norms < 1e-12):
        raise NumericError("embedder produced a zero-norm vector")
    return M / norms


def _cosines(embedder, pairs: Sequence[tuple[Event, Event]]) -> np.ndarray:
    left = _unit_rows(embedder.embed_many([p[0] for p in pairs]))
    right = _unit_rows(embedder.embed_many([p[1] for p in pairs]))
    return (left * right).sum(axis=1)


def hard_similarity_accuracy(pairs: Sequence[HardPair], embedder) -> float:
    """Percent of instances whose similar pair strictly out-scores the
    dissimilar pair; ties count as wrong."""
    if not pairs:
        raise InputError("hard similarity needs at least one pair")
    sim = _cosines(embedder, [p.similar for p in pairs])
    dis = _cosines(embedder, [p.dissimilar for p in pairs])
    return float(100.0 * np.mean(sim > dis))


def transitive_spearman(pairs: Sequence[TransitivePair], embedder) -> float:
    """Spearman rank correlation between predicted cosines and gold scores."""
    if len(pairs) < 2:
        raise InputError("transitive correlation needs at least two pairs")
    preds = _cosines(embedder, [(p.event_a, p.event_b) for p in pairs])
    golds = np.asarray([p.gold_score for p in pairs], dtype=np.float64)
    if np.all(preds == preds[0]):
        raise NumericError("all predictions identical; Spearman correlation undefined")
    rho = stats.spearmanr(preds, golds).statistic
    if not np.isfinite(rho):
        raise NumericError("Spearman correlation undefined on this input")
    return float(rho)


def mcnc_accuracy(instances: Sequence[McncInstance], embedder) -> float:
    """Zero-shot narrative cloze: cosine of each candidate against the
    re-normalized mean context embedding; first argmax wins ties."""
    if not instances:
        raise InputError("mcnc needs at least one instance")
    correct = 0
    for inst in instances:
        if not inst.context:
            raise InputError("mcnc instance has an empty context")
        ctx = _unit_rows(embedder.embed_many(list(inst.context)))
        center = ctx.mean(axis=0)
        norm = np.linalg.norm(center)
        if norm < 1e-12:
            raise NumericError("context embeddings cancelled to a zero vector")
        center = center / norm
        cands = _unit_rows(embedder.embed_many(list(inst.candidates)))
        pred = int(np.argmax(cands @ center))
        correct += pred == inst.gold_index
    return float(100.0 * correct / len(instances))


def alignment_uniformity(
    positive_pairs: Sequence[tuple[Event, Event]],
    all_events: Sequence[Event],
    embedder,
) -> tuple[float, float]:
    """Representation diagnostics, both lower-better.

    align: mean squared distance between positive pairs. uniform: log mean
    over distinct event pairs of exp(-2 * squared distance).
    """
    if not positive_pairs:
        raise InputError("alignment needs at least one positive pair")
    if len(all_events) < 2:
        raise InputError("uniformity needs at least two events")
    left = _unit_rows(embedder.embed_many([p[0] for p in positive_pairs]))
    right = _unit_rows(embedder.embed_many([p[1] for p in positive_pairs]))
    align = float(np.mean(((left - right) ** 2).sum(axis=1)))

    emb = _unit_rows(embedder.embed_many(list(all_events)))
    sq = ((emb[:, None, :] - emb[None, :, :]) ** 2).sum(axis=2)
    iu = np.triu_indices(len(all_events), k=1)
    uniform = float(np.log(np.mean(np.exp(-2.0 * sq[iu]))))
    return align, uniform


@dataclass
class CaseRow:
    event_a: Event
    event_b: Event
    cosine: float
    label: int


def case_study_dump(event_triples: Sequence[tuple[Event, Event, int]], embedder) -> list[CaseRow]:
    """One row per pair: both events, predicted cosine, and the given label."""
    if not event_triples:
        return []
    cos = _cosines(embedder, [(a, b) for a, b, _ in event_triples])
    return [CaseRow(a, b, float(c), int(lbl)) for (a, b, lbl), c in zip(event_triples, cos)]


def metric_report(
    embedder,
    hard_pairs: Sequence[HardPair] | None = None,
    extended_pairs: Sequence[HardPair] | None = None,
    transitive_pairs: Sequence[TransitivePair] | None = None,
    mcnc_instances: Sequence[McncInstance] | None = None,
) -> dict:
    """The consolidated JSON-ready report with all six metric keys.

    Metrics whose dataset is absent come out null. Alignment/uniformity are
    derived from the similar halves of the hard pairs.
    """
    report: dict = {k: None for k in METRIC_KEYS}
    if hard_pairs:
        report["original_acc"] = hard_similarity_accuracy(hard_pairs, embedder)
    if extended_pairs:
        report["extended_acc"] = hard_similarity_accuracy(extended_pairs, embedder)
    if transitive_pairs:
        report["transitive_rho"] = transitive_spearman(transitive_pairs, embedder)
    if mcnc_instances:
        report["mcnc_acc"] = mcnc_accuracy(mcnc_instances, embedder)
    if hard_pairs:
        positives = [p.similar for p in hard_pairs]
        events = sorted({e for pair in positives for e in pair}, key=lambda e: (e.subject, e.predicate, e.object))
        if len(events) >= 2:
            align, uniform = alignment_uniformity(positives, events, embedder)
            report["align"] = align
            report["uniform"] = uniform
    return report
