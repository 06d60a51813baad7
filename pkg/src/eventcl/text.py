"""Word-level vocabulary and tokenizer with BERT-style special-token framing.

Text is lowercased and split on whitespace. Every encoded sequence is
``[CLS] tokens... [SEP]``; unknown words map to ``[UNK]``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, TruncationError

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
RESERVED_TOKENS = (PAD, UNK, CLS, SEP, MASK)

PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)


class Vocabulary:
    """Bijective word/id mapping with the five reserved ids fixed at 0..4."""

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[:5]) != RESERVED_TOKENS:
            raise InputError("vocabulary must start with the five reserved tokens")
        self.id_to_token: list[str] = list(tokens)
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(tokens)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise InputError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def token_of(self, idx: int) -> str:
        return self.id_to_token[idx]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.id_to_token:
                fh.write(token + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(tokens)


@dataclass
class TokenSequence:
    """Ids for one encoded text: ids[0] is [CLS], ids[-1] is [SEP]."""

    ids: list[int]

    def __post_init__(self):
        if not self.ids or self.ids[0] != CLS_ID or self.ids[-1] != SEP_ID:
            raise InputError("token sequence must be framed by [CLS] ... [SEP]")

    def __len__(self) -> int:
        return len(self.ids)


def tokenize(text: str) -> list[str]:
    return text.lower().split()


def build_vocab(corpus: Iterable, min_count: int = 1, extra_tokens: Sequence[str] = ()) -> Vocabulary:
    """Count lowercased whitespace tokens across event texts; words with
    frequency >= min_count get ids. ``extra_tokens`` (for example prompt
    template words) are always included."""
    counts: Counter[str] = Counter()
    n_events = 0
    for event in corpus:
        n_events += 1
        for component in (event.subject, event.predicate, event.object):
            counts.update(tokenize(component))
    if n_events == 0:
        raise InputError("cannot build a vocabulary from an empty corpus")
    kept = {t for t, c in counts.items() if c >= min_count and t not in RESERVED_TOKENS}
    kept.update(t.lower() for t in extra_tokens if t.lower() not in RESERVED_TOKENS)
    # frequency-major order keeps common words at small ids; ties alphabetical
    ordered = sorted(kept, key=lambda t: (-counts.get(t, 0), t))
    return Vocabulary(list(RESERVED_TOKENS) + ordered)


def encode(text: str, vocab: Vocabulary) -> TokenSequence:
    """[CLS] + word ids + [SEP]; out-of-vocabulary words become [UNK]."""
    return TokenSequence([CLS_ID] + [vocab.id_of(t) for t in tokenize(text)] + [SEP_ID])


def decode(seq: TokenSequence, vocab: Vocabulary) -> list[str]:
    """Tokens between [CLS] and [SEP]."""
    return [vocab.token_of(i) for i in seq.ids[1:-1]]


def pad_batch(seqs: Sequence[TokenSequence], max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad to max_len with [PAD]. Returns (ids int64 [B,T], mask
    float32 [B,T]) with mask 1 on real tokens. Over-long input is an error;
    nothing is silently truncated."""
    for seq in seqs:
        if len(seq) > max_len:
            raise TruncationError(f"sequence of length {len(seq)} exceeds max_len {max_len}")
    ids = np.full((len(seqs), max_len), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), max_len), dtype=np.float32)
    for b, seq in enumerate(seqs):
        ids[b, : len(seq)] = seq.ids
        mask[b, : len(seq)] = 1.0
    return ids, mask
