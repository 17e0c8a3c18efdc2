"""Fast invariant checks runnable without any dataset."""

from __future__ import annotations

import itertools
from collections import Counter
from math import factorial, prod
from typing import Callable

import numpy as np

from .corpus import BioSentence, E2ERecord, FieldSchema, build_vocab, chunk_bio, to_e2e
from .evaluation import bootstrap_from_counts, chunk_f1, f1_from_counts, muc5_score
from .gradcheck import check_gradients
from .pointer import PointerConfig, PointerModel, forward_loss
from .tensor import Tensor, softmax


def check_softmax() -> str:
    y = softmax(Tensor(np.array([1000.0, 1000.5]))).data
    assert np.all(np.isfinite(y)) and abs(y.sum() - 1.0) < 1e-12
    masked = softmax(Tensor(np.array([3.0, 1.0, 2.0])), np.array([True, False, True])).data
    assert masked[1] == 0.0 and abs(masked.sum() - 1.0) < 1e-12
    return "stable and mask-exact"


def check_pointer_gradients() -> str:
    rec = E2ERecord(["fly", "to", "boston"], {"dest": ["boston"], "verb": ["fly"]})
    cfg = PointerConfig(("dest", "verb"), embed_dim=3, encoder_hidden=3, decoder_hidden=3, attn_dim=3)
    model = PointerModel(cfg, build_vocab([rec]), seed=7, dtype=np.float64)
    res = check_gradients(model.params, lambda: forward_loss(model, [rec])[0])
    assert res.max_rel_error < 1e-3, res
    return f"max rel error {res.max_rel_error:.2e} over {res.n_checked} entries"


def check_muc5() -> str:
    gold = [{"f": ["a"]}, {"f": ["b"]}, {"f": ["c"]}, {"f": ["d"]}, {"f": []}]
    pred = [{"f": ["a"]}, {"f": ["b"]}, {"f": ["x"]}, {"f": []}, {"f": []}]
    t = muc5_score(pred, gold).total
    assert (t.tp, t.spurious, t.missing) == (2, 1, 2), t
    return "2 tp / 1 spurious / 2 missing"


def check_chunking() -> str:
    s = BioSentence(["2", "start", "restaurants", "with", "inside", "dining"],
                    ["B-Rating", "I-Rating", "O", "O", "B-Amenity", "I-Amenity"])
    assert chunk_bio(s) == [("Rating", ["2", "start"]), ("Amenity", ["inside", "dining"])]
    toks = "cheapest airfare from tacoma to st. louis and detroit".split()
    labs = ["B-cost_relative", "O", "O", "B-fromloc", "O", "B-toloc", "I-toloc", "O", "B-toloc"]
    rec = to_e2e([BioSentence(toks, labs)], FieldSchema("atis", ("fromloc", "toloc", "cost_relative")))[0]
    assert rec.fields["toloc"] == ["st.", "louis", ",", "detroit"]
    assert chunk_f1([labs], [labs])[2] == 1.0
    return "worked examples reproduced"


def enumerate_bootstrap_p(counts_a: np.ndarray, counts_b: np.ndarray) -> float:
    """Exact bootstrap p by summing over all index multisets with multinomial weights."""
    n = len(counts_a)
    better_a = f1_from_counts(counts_a.sum(0)) >= f1_from_counts(counts_b.sum(0))
    win, lose = (counts_a, counts_b) if better_a else (counts_b, counts_a)
    total = 0.0
    for combo in itertools.combinations_with_replacement(range(n), n):
        mult = Counter(combo)
        weight = factorial(n) / prod(factorial(k) for k in mult.values())
        idx = list(combo)
        if f1_from_counts(win[idx].sum(0)) < f1_from_counts(lose[idx].sum(0)):
            total += weight
    return total / n**n


def check_bootstrap() -> str:
    a = np.array([[1, 0, 0], [1, 0, 0], [0, 1, 1], [1, 0, 0]])
    b = np.array([[1, 0, 0], [0, 1, 1], [1, 0, 0], [0, 0, 1]])
    exact = enumerate_bootstrap_p(a, b)
    est = bootstrap_from_counts(a, b, resamples=20_000, seed=0).p
    assert abs(est - exact) < 0.02, (est, exact)
    return f"p {est:.4f} vs exact {exact:.4f}"


CHECKS: list[tuple[str, Callable[[], str]]] = [
    ("softmax", check_softmax),
    ("pointer-gradients", check_pointer_gradients),
    ("muc5", check_muc5),
    ("chunking", check_chunking),
    ("bootstrap", check_bootstrap),
]


def run(echo=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            detail = fn()
            echo(f"PASS {name}: {detail}")
        except Exception as exc:  # report every check, keep going
            ok = False
            echo(f"FAIL {name}: {exc!r}")
    echo("selfcheck: " + ("PASS" if ok else "FAIL"))
    return ok
