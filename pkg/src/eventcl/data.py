"""Dataset schemas, JSON-lines loaders/writers, and a synthetic benchmark
generator.

All four file formats are JSON lines, one record per line, blank lines
skipped. Events are objects with "subject", "predicate", "object" keys. The
synthetic generator builds a training corpus plus the three evaluation sets
from clusters of interchangeable role words: events inside a cluster are
semantically "the same" while sharing no surface words, which is exactly the
contrast the hard-similarity protocol probes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .augment import Event
from .errors import InputError, ParseError, RangeError, SchemaError

_ROLES = ("subject", "predicate", "object")


@dataclass(frozen=True)
class HardPair:
    """A similar pair (low overlap) and a dissimilar pair (high overlap)."""

    similar: tuple[Event, Event]
    dissimilar: tuple[Event, Event]


@dataclass(frozen=True)
class TransitivePair:
    event_a: Event
    event_b: Event
    gold_score: float  # human similarity in [1, 7]


@dataclass(frozen=True)
class McncInstance:
    context: tuple[Event, ...]
    candidates: tuple[Event, ...]  # exactly 5
    gold_index: int


def _iter_json_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(str(e), lineno) from e


def _event_from_obj(obj, lineno: int, where: str = "") -> Event:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}expected an event object", lineno)
    for key in _ROLES:
        if key not in obj:
            raise SchemaError(f"{where}missing key {key!r}", lineno, key=key)
        if not isinstance(obj[key], str):
            raise SchemaError(f"{where}key {key!r} must be a string", lineno, key=key)
    try:
        return Event(obj["subject"], obj["predicate"], obj["object"])
    except InputError as e:
        raise SchemaError(f"{where}{e}", lineno) from e


def _event_to_obj(e: Event) -> dict:
    return {"subject": e.subject, "predicate": e.predicate, "object": e.object}


def load_events(path) -> list[Event]:
    return [_event_from_obj(obj, lineno) for lineno, obj in _iter_json_lines(path)]


def save_events(path, events: Sequence[Event]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(json.dumps(_event_to_obj(e)) + "\n")


def _pair_from_obj(obj, lineno, key) -> tuple[Event, Event]:
    if key not in obj:
        raise SchemaError(f"missing key {key!r}", lineno, key=key)
    pair = obj[key]
    if not isinstance(pair, list) or len(pair) != 2:
        raise SchemaError(f"key {key!r} must be a two-event list", lineno, key=key)
    return (_event_from_obj(pair[0], lineno, f"{key}[0]: "), _event_from_obj(pair[1], lineno, f"{key}[1]: "))


def load_hard_pairs(path) -> list[HardPair]:
    out = []
    for lineno, obj in _iter_json_lines(path):
        out.append(
            HardPair(
                similar=_pair_from_obj(obj, lineno, "similar"),
                dissimilar=_pair_from_obj(obj, lineno, "dissimilar"),
            )
        )
    return out


def save_hard_pairs(path, pairs: Sequence[HardPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {
                        "similar": [_event_to_obj(p.similar[0]), _event_to_obj(p.similar[1])],
                        "dissimilar": [_event_to_obj(p.dissimilar[0]), _event_to_obj(p.dissimilar[1])],
                    }
                )
                + "\n"
            )


def load_transitive(path) -> list[TransitivePair]:
    out = []
    for lineno, obj in _iter_json_lines(path):
        for key in ("event_a", "event_b", "gold_score"):
            if key not in obj:
                raise SchemaError(f"missing key {key!r}", lineno, key=key)
        score = obj["gold_score"]
        if not isinstance(score, (int, float)) or not 1.0 <= float(score) <= 7.0:
            raise RangeError(f"gold_score {score!r} outside [1, 7]", lineno, key="gold_score")
        out.append(
            TransitivePair(
                event_a=_event_from_obj(obj["event_a"], lineno, "event_a: "),
                event_b=_event_from_obj(obj["event_b"], lineno, "event_b: "),
                gold_score=float(score),
            )
        )
    return out


def save_transitive(path, pairs: Sequence[TransitivePair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(
                json.dumps(
                    {"event_a": _event_to_obj(p.event_a), "event_b": _event_to_obj(p.event_b), "gold_score": p.gold_score}
                )
                + "\n"
            )


def load_mcnc(path) -> list[McncInstance]:
    out = []
    for lineno, obj in _iter_json_lines(path):
        for key in ("context", "candidates", "gold_index"):
            if key not in obj:
                raise SchemaError(f"missing key {key!r}", lineno, key=key)
        if not isinstance(obj["candidates"], list) or len(obj["candidates"]) != 5:
            raise SchemaError("candidates must list exactly 5 events", lineno, key="candidates")
        if not isinstance(obj["context"], list) or not obj["context"]:
            raise SchemaError("context must be a non-empty event list", lineno, key="context")
        gold = obj["gold_index"]
        if not isinstance(gold, int) or not 0 <= gold <= 4:
            raise RangeError(f"gold_index {gold!r} outside 0..4", lineno, key="gold_index")
        candidates = tuple(_event_from_obj(c, lineno, f"candidates[{i}]: ") for i, c in enumerate(obj["candidates"]))
        if len(set(candidates)) != 5:
            raise SchemaError("candidates must be distinct", lineno, key="candidates")
        out.append(
            McncInstance(
                context=tuple(_event_from_obj(c, lineno, f"context[{i}]: ") for i, c in enumerate(obj["context"])),
                candidates=candidates,
                gold_index=gold,
            )
        )
    return out


def save_mcnc(path, instances: Sequence[McncInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for m in instances:
            fh.write(
                json.dumps(
                    {
                        "context": [_event_to_obj(e) for e in m.context],
                        "candidates": [_event_to_obj(e) for e in m.candidates],
                        "gold_index": m.gold_index,
                    }
                )
                + "\n"
            )


# Built-in synonym clusters: four interchangeable words per role. Twelve
# clusters cover the default desk benchmark; larger specs synthesize
# deterministic pseudo-word clusters beyond these.
_BUILTIN_CLUSTERS: dict[str, dict[str, list[str]]] = {
    "military": {
        "subject": ["army", "troops", "soldiers", "militia"],
        "predicate": ["launch", "fire", "deploy", "strike"],
        "object": ["missile", "rocket", "weapon", "artillery"],
    },
    "commerce": {
        "subject": ["merchant", "vendor", "trader", "shopkeeper"],
        "predicate": ["sell", "trade", "market", "exchange"],
        "object": ["goods", "wares", "merchandise", "produce"],
    },
    "sports": {
        "subject": ["team", "squad", "players", "athletes"],
        "predicate": ["win", "score", "clinch", "capture"],
        "object": ["match", "game", "trophy", "title"],
    },
    "music": {
        "subject": ["band", "orchestra", "musicians", "ensemble"],
        "predicate": ["perform", "play", "rehearse", "record"],
        "object": ["concert", "symphony", "song", "album"],
    },
    "cooking": {
        "subject": ["chef", "cook", "baker", "caterer"],
        "predicate": ["prepare", "bake", "roast", "simmer"],
        "object": ["meal", "dinner", "bread", "stew"],
    },
    "medicine": {
        "subject": ["doctor", "surgeon", "nurse", "medic"],
        "predicate": ["treat", "heal", "cure", "examine"],
        "object": ["patient", "wound", "illness", "injury"],
    },
    "law": {
        "subject": ["judge", "court", "jury", "tribunal"],
        "predicate": ["rule", "sentence", "acquit", "convict"],
        "object": ["defendant", "case", "appeal", "verdict"],
    },
    "farming": {
        "subject": ["farmer", "grower", "rancher", "harvester"],
        "predicate": ["plant", "harvest", "cultivate", "irrigate"],
        "object": ["crop", "wheat", "field", "orchard"],
    },
    "science": {
        "subject": ["scientist", "researcher", "chemist", "physicist"],
        "predicate": ["discover", "analyze", "measure", "observe"],
        "object": ["particle", "compound", "reaction", "signal"],
    },
    "travel": {
        "subject": ["tourist", "traveler", "pilgrim", "visitor"],
        "predicate": ["visit", "explore", "tour", "cross"],
        "object": ["city", "museum", "border", "island"],
    },
    "construction": {
        "subject": ["builder", "crew", "contractor", "masons"],
        "predicate": ["build", "erect", "assemble", "renovate"],
        "object": ["house", "bridge", "tower", "wall"],
    },
    "weather": {
        "subject": ["storm", "hurricane", "blizzard", "cyclone"],
        "predicate": ["batter", "flood", "freeze", "drench"],
        "object": ["coast", "village", "valley", "harbor"],
    },
}


def default_cluster_vocab(num_clusters: int) -> dict[str, dict[str, list[str]]]:
    """First the built-in English clusters, then pseudo-word clusters."""
    names = list(_BUILTIN_CLUSTERS)
    vocab = {name: _BUILTIN_CLUSTERS[name] for name in names[:num_clusters]}
    for c in range(len(vocab), num_clusters):
        vocab[f"cluster{c:02d}"] = {
            role: [f"{role[0]}{c:02d}x{v}" for v in range(4)] for role in _ROLES
        }
    return vocab


@dataclass
class SyntheticSpec:
    """Settings for the desk-scale benchmark generator."""

    num_synonym_clusters: int = 8
    cluster_vocab: dict[str, dict[str, list[str]]] | None = None
    events_per_cluster: int = 250
    seed: int = 0
    num_hard_pairs: int = 400
    num_transitive: int = 200
    num_mcnc: int = 1000
    mcnc_context_len: int = 3

    def resolve_vocab(self) -> dict[str, dict[str, list[str]]]:
        vocab = self.cluster_vocab or default_cluster_vocab(self.num_synonym_clusters)
        if len(vocab) < 2:
            raise InputError("synthetic generation needs at least 2 clusters")
        for name, roles in vocab.items():
            for role in _ROLES:
                if len(roles.get(role, [])) < 2:
                    raise InputError(f"cluster {name!r} needs >= 2 interchangeable words per role")
        return vocab


@dataclass
class SyntheticData:
    corpus: list[Event]
    hard_pairs: list[HardPair]
    transitive_pairs: list[TransitivePair]
    mcnc_instances: list[McncInstance]


def _sample_event(roles: dict[str, list[str]], rng: np.random.Generator, exclude: dict[str, int] | None = None) -> tuple[Event, dict[str, int]]:
    """Sample one event from a cluster; exclude bans one variant per role."""
    picks = {}
    for role in _ROLES:
        words = roles[role]
        options = [i for i in range(len(words)) if exclude is None or i != exclude.get(role)]
        picks[role] = int(rng.choice(options))
    return Event(*(roles[role][picks[role]] for role in _ROLES)), picks


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Deterministic corpus + evaluation sets from synonym clusters.

    Similar hard pairs share a cluster but no surface words; dissimilar pairs
    share two words and swap one role into a foreign cluster. Transitive gold
    starts at 7 within-cluster and drops by 2 per role drawn from a different
    cluster. MCNC contexts stay inside one cluster; the gold candidate comes
    from that cluster but avoids every surface word the context used, so an
    untrained encoder scores at chance.
    """
    vocab = spec.resolve_vocab()
    names = list(vocab)
    rng = np.random.default_rng(spec.seed)

    corpus: list[Event] = []
    for name in names:
        for _ in range(spec.events_per_cluster):
            corpus.append(_sample_event(vocab[name], rng)[0])
    rng.shuffle(corpus)

    hard_pairs: list[HardPair] = []
    for _ in range(spec.num_hard_pairs):
        c = names[int(rng.integers(len(names)))]
        roles = vocab[c]
        a, picks = _sample_event(roles, rng)
        b, _ = _sample_event(roles, rng, exclude=picks)  # zero lexical overlap
        swap_role = _ROLES[int(rng.integers(3))]
        other = names[int(rng.integers(len(names)))]
        while other == c:
            other = names[int(rng.integers(len(names)))]
        foreign_word = vocab[other][swap_role][int(rng.integers(len(vocab[other][swap_role])))]
        b_prime = Event(*(foreign_word if role == swap_role else getattr(a, role) for role in _ROLES))
        hard_pairs.append(HardPair(similar=(a, b), dissimilar=(a, b_prime)))

    transitive_pairs: list[TransitivePair] = []
    for i in range(spec.num_transitive):
        grade = i % 4  # number of roles drawn from foreign clusters
        c = names[int(rng.integers(len(names)))]
        roles = vocab[c]
        a, picks = _sample_event(roles, rng)
        differing = list(rng.choice(3, size=grade, replace=False)) if grade else []
        parts = []
        for r_idx, role in enumerate(_ROLES):
            if r_idx in differing:
                other = names[int(rng.integers(len(names)))]
                while other == c:
                    other = names[int(rng.integers(len(names)))]
                words = vocab[other][role]
                parts.append(words[int(rng.integers(len(words)))])
            else:
                words = roles[role]
                options = [w for j, w in enumerate(words) if j != picks[role]]
                parts.append(options[int(rng.integers(len(options)))])
        b = Event(*parts)
        transitive_pairs.append(TransitivePair(event_a=a, event_b=b, gold_score=float(7 - 2 * grade)))

    mcnc_instances: list[McncInstance] = []
    for _ in range(spec.num_mcnc):
        c = names[int(rng.integers(len(names)))]
        roles = vocab[c]
        context = []
        used: dict[str, set[int]] = {role: set() for role in _ROLES}
        for _ in range(spec.mcnc_context_len):
            e, picks = _sample_event(roles, rng)
            context.append(e)
            for role in _ROLES:
                used[role].add(picks[role])
        gold_parts = []
        for role in _ROLES:
            words = roles[role]
            fresh = [i for i in range(len(words)) if i not in used[role]]
            options = fresh if fresh else list(range(len(words)))
            gold_parts.append(words[int(rng.choice(options))])
        gold = Event(*gold_parts)
        candidates: list[Event] = []
        while len(candidates) < 4:
            other = names[int(rng.integers(len(names)))]
            if other == c:
                continue
            distractor = _sample_event(vocab[other], rng)[0]
            if distractor not in candidates:
                candidates.append(distractor)
        gold_index = int(rng.integers(5))
        candidates.insert(gold_index, gold)
        mcnc_instances.append(McncInstance(context=tuple(context), candidates=tuple(candidates), gold_index=gold_index))

    return SyntheticData(corpus, hard_pairs, transitive_pairs, mcnc_instances)
