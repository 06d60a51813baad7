"""Event text augmentation: prompt-template insertion, whole-component
masking, and SPO/PSO surface rendering.

A template insertion is a single Bernoulli draw per event: either all three
label clauses are inserted or none are. Component masking replaces every
token of one uniformly chosen component with [MASK].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .text import MASK_ID, TokenSequence, Vocabulary, encode, tokenize

SPO = "SPO"
PSO = "PSO"

# template_id -> connector between label and component (None = no labels)
TEMPLATES: dict[str, str | None] = {
    "none": None,
    "bare_labels": "",
    "colon_labels": ":",
    "is_labels": "is",
}

_COMPONENTS = ("subject", "predicate", "object")


@dataclass(frozen=True)
class Event:
    """A subject / predicate / object text triple."""

    subject: str
    predicate: str
    object: str

    def __post_init__(self):
        for role in _COMPONENTS:
            value = getattr(self, role).strip()
            if not value:
                raise InputError(f"event {role} must be non-empty")
            object.__setattr__(self, role, value)

    def components(self) -> tuple[str, str, str]:
        return (self.subject, self.predicate, self.object)


@dataclass
class PromptConfig:
    """Template insertion settings: probability, template, and seed."""

    insertion_probability: float = 0.2
    template_id: str = "is_labels"
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.insertion_probability <= 1.0:
            raise InputError("insertion probability must lie in [0, 1]")
        if self.template_id not in TEMPLATES:
            raise InputError(f"unknown template {self.template_id!r}; choose from {sorted(TEMPLATES)}")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


def _ordered(e: Event, order: str) -> list[tuple[str, str]]:
    if order == SPO:
        roles = ("subject", "predicate", "object")
    elif order == PSO:
        roles = ("predicate", "subject", "object")
    else:
        raise InputError(f"word order must be {SPO} or {PSO}, got {order!r}")
    return [(role, getattr(e, role)) for role in roles]


def render(e: Event, order: str = SPO) -> str:
    """Plain surface form: component texts joined by spaces in the given order."""
    return " ".join(text for _, text in _ordered(e, order))


def apply_prompt(e: Event, cfg: PromptConfig, insert: bool, order: str = SPO) -> str:
    """Templated rendering when ``insert`` is true, else the plain rendering.

    The is_labels form reads "subject is x_s predicate is x_p object is x_o";
    clause order follows the word order.
    """
    connector = TEMPLATES[cfg.template_id]
    if not insert or connector is None:
        return render(e, order)
    clauses = []
    for role, text in _ordered(e, order):
        clauses.append(f"{role} {connector} {text}" if connector else f"{role} {text}")
    return " ".join(clauses)


def template_tokens(template_id: str) -> list[str]:
    """All label/connector words a template can introduce (for vocab building)."""
    connector = TEMPLATES[template_id]
    if connector is None:
        return []
    words = list(_COMPONENTS)
    if connector:
        words.append(connector)
    return words


def make_dual_positives(e: Event, cfg: PromptConfig, rng: np.random.Generator | None = None, order: str = SPO) -> tuple[str, str]:
    """Two independently drawn prompt augmentations of the same event."""
    rng = cfg.rng() if rng is None else rng
    draws = rng.random(2) < cfg.insertion_probability
    return (
        apply_prompt(e, cfg, bool(draws[0]), order),
        apply_prompt(e, cfg, bool(draws[1]), order),
    )


def draw_component(rng: np.random.Generator) -> str:
    """Uniform choice of the component to mask."""
    return _COMPONENTS[int(rng.integers(0, 3))]


def event_mask(
    e: Event,
    pick: str,
    vocab: Vocabulary,
    order: str = SPO,
) -> tuple[TokenSequence, list[tuple[int, int]]]:
    """Mask every token of one component in the plain rendering.

    Returns the masked id sequence and (position, original_id) targets, with
    positions indexing the framed sequence (0 is [CLS]).
    """
    if pick not in _COMPONENTS:
        raise InputError(f"pick must be one of {_COMPONENTS}, got {pick!r}")
    seq = encode(render(e, order), vocab)
    masked = list(seq.ids)
    targets: list[tuple[int, int]] = []
    pos = 1  # skip [CLS]
    for role, text in _ordered(e, order):
        n_tokens = len(tokenize(text))
        if role == pick:
            for p in range(pos, pos + n_tokens):
                targets.append((p, masked[p]))
                masked[p] = MASK_ID
        pos += n_tokens
    return TokenSequence(masked), targets
