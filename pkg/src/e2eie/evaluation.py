"""MUC-5 style exact-match scoring, chunk F1 and paired bootstrap testing."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import BioSentence, bio_spans

DEFAULT_RESAMPLES = 10_000
REPORT_FORMAT = "e2eie-eval-report"
REPORT_VERSION = 1

FieldMap = Mapping[str, Sequence[str]]


class SchemaMismatchError(ValueError):
    pass


def prf(tp: int, spurious: int, missing: int) -> tuple[float, float, float]:
    """Precision, recall and F1; zero denominators give 0."""
    p = tp / (tp + spurious) if tp + spurious else 0.0
    r = tp / (tp + missing) if tp + missing else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class FieldCounts:
    tp: int = 0
    spurious: int = 0
    missing: int = 0

    def add(self, tp: int, spurious: int, missing: int) -> None:
        self.tp += tp
        self.spurious += spurious
        self.missing += missing

    @property
    def scores(self) -> tuple[float, float, float]:
        return prf(self.tp, self.spurious, self.missing)


@dataclass
class EvalReport:
    fields: tuple[str, ...]
    counts: dict[str, FieldCounts]
    n_records: int

    @property
    def total(self) -> FieldCounts:
        t = FieldCounts()
        for c in self.counts.values():
            t.add(c.tp, c.spurious, c.missing)
        return t

    @property
    def precision(self) -> float:
        return self.total.scores[0]

    @property
    def recall(self) -> float:
        return self.total.scores[1]

    @property
    def f1(self) -> float:
        return self.total.scores[2]

    def to_dict(self) -> dict:
        def row(c: FieldCounts) -> dict:
            p, r, f = c.scores
            return {"tp": c.tp, "spurious": c.spurious, "missing": c.missing,
                    "precision": p, "recall": r, "f1": f}

        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "n_records": self.n_records,
            "fields": {name: row(self.counts[name]) for name in self.fields},
            "micro": row(self.total),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        counts = {k: FieldCounts(v["tp"], v["spurious"], v["missing"]) for k, v in d["fields"].items()}
        return cls(tuple(d["fields"]), counts, d["n_records"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        width = max([len("micro")] + [len(f) for f in self.fields])
        lines = [f"{'field':<{width}}  {'tp':>6} {'spur':>6} {'miss':>6}  {'P':>7} {'R':>7} {'F1':>7}"]
        for name in list(self.fields) + ["micro"]:
            c = self.total if name == "micro" else self.counts[name]
            p, r, f = c.scores
            lines.append(f"{name:<{width}}  {c.tp:>6} {c.spurious:>6} {c.missing:>6}  {p:7.4f} {r:7.4f} {f:7.4f}")
        lines.append(f"records: {self.n_records}")
        return "\n".join(lines)


def score_field(pred: Sequence[str], gold: Sequence[str]) -> tuple[int, int, int]:
    """(tp, spurious, missing) for one slot; no partial credit."""
    pred, gold = list(pred), list(gold)
    if gold:
        if pred == gold:
            return 1, 0, 0
        return 0, int(bool(pred)), 1
    return 0, int(bool(pred)), 0


def _fields_of(predictions: Sequence[FieldMap], gold: Sequence[FieldMap],
               fields: Optional[Sequence[str]]) -> tuple[str, ...]:
    if len(predictions) != len(gold):
        raise SchemaMismatchError(f"{len(predictions)} predictions for {len(gold)} gold records")
    if fields is None:
        fields = tuple(gold[0]) if gold else ()
    fields = tuple(fields)
    want = set(fields)
    for i, (p, g) in enumerate(zip(predictions, gold)):
        if set(g) != want or set(p) != want:
            raise SchemaMismatchError(
                f"record {i}: fields {sorted(set(p))} / {sorted(set(g))} differ from schema {sorted(want)}")
    return fields


def muc5_score(predictions: Sequence[FieldMap], gold: Sequence[FieldMap],
               fields: Optional[Sequence[str]] = None) -> EvalReport:
    fields = _fields_of(predictions, gold, fields)
    counts = {name: FieldCounts() for name in fields}
    for p, g in zip(predictions, gold):
        for name in fields:
            counts[name].add(*score_field(p[name], g[name]))
    return EvalReport(fields, counts, len(gold))


def record_counts(predictions: Sequence[FieldMap], gold: Sequence[FieldMap],
                  fields: Optional[Sequence[str]] = None) -> np.ndarray:
    """[n_records, 3] array of (tp, spurious, missing) summed over fields."""
    fields = _fields_of(predictions, gold, fields)
    out = np.zeros((len(gold), 3), dtype=np.int64)
    for i, (p, g) in enumerate(zip(predictions, gold)):
        for name in fields:
            out[i] += score_field(p[name], g[name])
    return out


def f1_from_counts(counts: np.ndarray) -> np.ndarray:
    """Micro F1 along the last axis of (tp, spurious, missing) counts.

    2tp / (2tp + spurious + missing) equals the harmonic mean of P and R and
    is 0 whenever tp is 0.
    """
    counts = np.asarray(counts, dtype=np.float64)
    tp, sp, mi = counts[..., 0], counts[..., 1], counts[..., 2]
    denom = 2 * tp + sp + mi
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, 2 * tp / np.where(denom > 0, denom, 1), 0.0)


def _labels(x) -> list[str]:
    return list(x.labels) if isinstance(x, BioSentence) else list(x)


def chunk_f1(predicted, gold) -> tuple[float, float, float]:
    """Chunk precision/recall/F1 over aligned label sequences.

    A chunk counts as correct when type, start and end all match; stray I-X
    tags open chunks as in conlleval. Returns fractions, not percentages.
    """
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted sentences for {len(gold)} gold")
    correct = n_pred = n_gold = 0
    for i, (p, g) in enumerate(zip(predicted, gold)):
        pl, gl = _labels(p), _labels(g)
        if len(pl) != len(gl):
            raise ValueError(f"sentence {i}: {len(pl)} predicted labels for {len(gl)} gold")
        ps, gs = set(bio_spans(pl)), set(bio_spans(gl))
        correct += len(ps & gs)
        n_pred += len(ps)
        n_gold += len(gs)
    return prf(correct, n_pred - correct, n_gold - correct)


@dataclass
class SignificanceResult:
    resamples: int
    p: float
    better: str  # "A" or "B", by full-test micro F1; ties go to A
    f1_a: float
    f1_b: float
    seed: Optional[int] = None

    def to_dict(self) -> dict:
        return {"resamples": self.resamples, "p": self.p, "better": self.better,
                "f1_a": self.f1_a, "f1_b": self.f1_b, "seed": self.seed}


def count_worse(counts_win: np.ndarray, counts_lose: np.ndarray, indices: np.ndarray) -> int:
    """Number of index rows on which the first system's micro F1 is strictly lower."""
    fw = f1_from_counts(counts_win[indices].sum(axis=1))
    fl = f1_from_counts(counts_lose[indices].sum(axis=1))
    return int(np.count_nonzero(fw < fl))


def bootstrap_from_counts(counts_a: np.ndarray, counts_b: np.ndarray, resamples: int = DEFAULT_RESAMPLES,
                          seed: Optional[int] = 42, chunk: int = 1000) -> SignificanceResult:
    """Paired bootstrap over per-record count arrays.

    Draws ``resamples`` index vectors of the test-set size, uniformly with
    replacement, and scores both systems on the same indices. ``p`` is the
    fraction of resamples in which the full-test winner scores strictly
    lower than the other system. Draws come from one
    ``np.random.default_rng(seed)`` stream in blocks of ``chunk`` resamples.
    """
    counts_a = np.asarray(counts_a)
    counts_b = np.asarray(counts_b)
    n = len(counts_a)
    if n == 0:
        raise ValueError("cannot bootstrap an empty test set")
    if counts_b.shape != counts_a.shape:
        raise ValueError("prediction sets are not aligned")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    f1_a = float(f1_from_counts(counts_a.sum(axis=0)))
    f1_b = float(f1_from_counts(counts_b.sum(axis=0)))
    better = "A" if f1_a >= f1_b else "B"
    win, lose = (counts_a, counts_b) if better == "A" else (counts_b, counts_a)
    rng = np.random.default_rng(seed)
    worse = 0
    done = 0
    while done < resamples:
        k = min(chunk, resamples - done)
        worse += count_worse(win, lose, rng.integers(0, n, size=(k, n)))
        done += k
    return SignificanceResult(resamples, worse / resamples, better, f1_a, f1_b, seed)


def bootstrap_significance(pred_a: Sequence[FieldMap], pred_b: Sequence[FieldMap], gold: Sequence[FieldMap],
                           resamples: int = DEFAULT_RESAMPLES, seed: Optional[int] = 42,
                           fields: Optional[Sequence[str]] = None) -> SignificanceResult:
    if len(gold) == 0:
        raise ValueError("cannot bootstrap an empty test set")
    return bootstrap_from_counts(record_counts(pred_a, gold, fields), record_counts(pred_b, gold, fields),
                                 resamples, seed)
