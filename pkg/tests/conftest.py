from __future__ import annotations

import numpy as np
import pytest

from eventcl.augment import Event
from eventcl.text import build_vocab


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_events():
    return [
        Event("military", "launch", "missile"),
        Event("army", "starts", "initiative"),
        Event("merchant", "sell", "goods"),
        Event("team", "win", "match"),
    ]


@pytest.fixture
def small_vocab(small_events):
    return build_vocab(small_events, min_count=1, extra_tokens=["subject", "predicate", "object", "is", ":"])
