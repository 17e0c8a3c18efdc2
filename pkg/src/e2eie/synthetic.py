"""Seeded synthetic flight-request corpora in BIO format.

Stand-in data for tests and demos: short requests with multi-word cities,
optional fields and occasional multi-valued destinations, shaped like the
ATIS flight domain.
"""

from __future__ import annotations

import numpy as np

from .corpus import BioSentence

CITIES = [
    ["boston"], ["denver"], ["dallas"], ["atlanta"], ["pittsburgh"], ["tacoma"],
    ["detroit"], ["oakland"], ["seattle"], ["baltimore"],
    ["st.", "louis"], ["new", "york"], ["san", "francisco"], ["salt", "lake", "city"],
]
AIRLINES = [["delta"], ["united"], ["american", "airlines"], ["us", "air"], ["continental"]]
DAYS = [["monday"], ["tuesday"], ["wednesday"], ["thursday"], ["friday"], ["saturday"], ["sunday"]]
PERIODS = [["morning"], ["afternoon"], ["evening"], ["night"]]
COSTS = [["cheapest"], ["lowest"]]
OPENERS = [["show", "me"], ["i", "need"], ["list"], ["what", "are", "the"], ["find"]]

FIELDS = ("fromloc", "toloc", "airline_name", "cost_relative", "day_name", "period_of_day")


def _labelled(tokens: list[str], field: str) -> list[tuple[str, str]]:
    return [(t, ("B-" if i == 0 else "I-") + field) for i, t in enumerate(tokens)]


def _plain(tokens: list[str]) -> list[tuple[str, str]]:
    return [(t, "O") for t in tokens]


def flight_sentence(rng: np.random.Generator) -> BioSentence:
    pick = lambda xs: xs[rng.integers(len(xs))]  # noqa: E731
    parts: list[tuple[str, str]] = []
    parts += _plain(pick(OPENERS))
    if rng.random() < 0.3:
        parts += _labelled(pick(COSTS), "cost_relative")
    if rng.random() < 0.3:
        parts += _labelled(pick(AIRLINES), "airline_name")
    parts += _plain(["flights"])
    src = pick(CITIES)
    parts += _plain(["from"]) + _labelled(src, "fromloc")
    dst = pick([c for c in CITIES if c != src])
    parts += _plain(["to"]) + _labelled(dst, "toloc")
    if rng.random() < 0.2:
        extra = pick([c for c in CITIES if c not in (src, dst)])
        parts += _plain(["and"]) + _labelled(extra, "toloc")
    if rng.random() < 0.4:
        parts += _plain(["on"]) + _labelled(pick(DAYS), "day_name")
    if rng.random() < 0.3:
        parts += _plain(["in", "the"]) + _labelled(pick(PERIODS), "period_of_day")
    tokens = [t for t, _ in parts]
    labels = [lab for _, lab in parts]
    return BioSentence(tokens, labels)


def flight_corpus(n: int, seed: int = 0) -> list[BioSentence]:
    rng = np.random.default_rng(seed)
    return [flight_sentence(rng) for _ in range(n)]


def random_bio_sentence(rng: np.random.Generator, types=("A", "B", "C"), max_len: int = 12,
                        vocab_size: int = 30, stray_i: bool = False) -> BioSentence:
    """Random well-formed (or, with ``stray_i``, lenient) BIO sentence."""
    n = int(rng.integers(1, max_len + 1))
    tokens = [f"w{int(rng.integers(vocab_size))}" for _ in range(n)]
    labels = []
    prev = "O"
    for _ in range(n):
        r = rng.random()
        typ = types[rng.integers(len(types))]
        if r < 0.4:
            lab = "O"
        elif r < 0.7:
            lab = f"B-{typ}"
        elif prev != "O" and not stray_i:
            lab = "I-" + prev[2:]
        elif stray_i:
            lab = f"I-{typ}"
        else:
            lab = "O"
        labels.append(lab)
        prev = lab
    return BioSentence(tokens, labels)
