"""BIO corpora, E2E record construction and vocabularies.

The E2E view of a BIO sentence keeps only the raw tokens and, per schema
field, the chunk values joined by a standalone comma token. Model inputs are
the raw tokens with a comma prepended and an EOS symbol appended, so that
both the joiner and the terminator can be copied from the input.
"""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

PAD = "<pad>"
UNK = "<unk>"
EOS = "<eos>"
COMMA = ","
RESERVED = (PAD, UNK, EOS, COMMA)

SCHEMA_FORMAT = "e2eie-schema"
SCHEMA_VERSION = 1
ATIS_FIELD_COUNT = 10
DATASET_KINDS = ("atis", "restaurant", "movie")

_BIO_LABEL = re.compile(r"^(O|[BI]-\S+)$")

PathLike = Union[str, Path]


class BioFormatError(ValueError):
    """Malformed BIO input; carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None, path: PathLike | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


def is_bio_label(label: str) -> bool:
    return bool(_BIO_LABEL.match(label))


@dataclass
class BioSentence:
    tokens: list[str]
    labels: list[str]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise BioFormatError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels")
        for lab in self.labels:
            if not is_bio_label(lab):
                raise BioFormatError(f"label {lab!r} is not O, B-X or I-X")

    def __len__(self) -> int:
        return len(self.tokens)


def parse_bio(lines: Iterable[str], path: PathLike | None = None) -> list[BioSentence]:
    sentences: list[BioSentence] = []
    tokens: list[str] = []
    labels: list[str] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if tokens:
                sentences.append(BioSentence(tokens, labels))
                tokens, labels = [], []
            continue
        cols = line.split()
        if len(cols) != 2:
            raise BioFormatError(f"expected 'token label', got {len(cols)} columns", lineno, path)
        tok, lab = cols
        if not is_bio_label(lab):
            raise BioFormatError(f"label {lab!r} is not O, B-X or I-X", lineno, path)
        tokens.append(tok)
        labels.append(lab)
    if tokens:
        sentences.append(BioSentence(tokens, labels))
    return sentences


def read_bio(path: PathLike) -> list[BioSentence]:
    """Read a CoNLL-style two-column file; blank lines separate sentences."""
    with open(path, encoding="utf-8") as fh:
        return parse_bio(fh, path)


def write_bio(path: PathLike, sentences: Iterable[BioSentence]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in sentences:
            for tok, lab in zip(s.tokens, s.labels):
                fh.write(f"{tok} {lab}\n")
            fh.write("\n")


def bio_spans(labels: Sequence[str]) -> list[tuple[str, int, int]]:
    """Chunks as (type, start, end) with ``end`` exclusive.

    B-X always opens a chunk. I-X continues an open chunk of type X and
    otherwise opens a new one, which is how conlleval treats stray I tags.
    """
    spans = []
    cur_type, start = None, 0
    for i, lab in enumerate(labels):
        if lab == "O":
            tag, typ = "O", None
        else:
            tag, typ = lab[0], lab[2:]
        if cur_type is not None and (tag != "I" or typ != cur_type):
            spans.append((cur_type, start, i))
            cur_type = None
        if tag == "B" or (tag == "I" and cur_type is None):
            cur_type, start = typ, i
    if cur_type is not None:
        spans.append((cur_type, start, len(labels)))
    return spans


def chunk_bio(sentence: BioSentence) -> list[tuple[str, list[str]]]:
    return [(typ, sentence.tokens[s:e]) for typ, s, e in bio_spans(sentence.labels)]


def spans_to_labels(length: int, spans: Iterable[tuple[str, int, int]]) -> list[str]:
    labels = ["O"] * length
    for typ, s, e in spans:
        labels[s] = f"B-{typ}"
        for i in range(s + 1, e):
            labels[i] = f"I-{typ}"
    return labels


@dataclass(frozen=True)
class FieldSchema:
    dataset: str
    fields: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        if len(set(self.fields)) != len(self.fields):
            raise ValueError(f"duplicate field names in schema: {self.fields}")

    def __len__(self) -> int:
        return len(self.fields)

    def to_dict(self) -> dict:
        return {"format": SCHEMA_FORMAT, "version": SCHEMA_VERSION,
                "dataset": self.dataset, "fields": list(self.fields)}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldSchema":
        if d.get("format") != SCHEMA_FORMAT or d.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema manifest {d.get('format')!r} v{d.get('version')}")
        return cls(d["dataset"], tuple(d["fields"]))

    def save(self, path: PathLike) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: PathLike) -> "FieldSchema":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def chunk_counts(sentences: Iterable[BioSentence]) -> Counter:
    counts: Counter = Counter()
    for s in sentences:
        counts.update(typ for typ, _, _ in bio_spans(s.labels))
    return counts


def select_schema(sentences: Sequence[BioSentence], dataset: str) -> FieldSchema:
    """Pick the extraction fields from training data.

    ATIS keeps the 10 chunk types with the most chunk occurrences; other
    datasets keep every chunk type. Fields are ordered by descending
    frequency, ties broken lexicographically.
    """
    if not sentences:
        raise ValueError("cannot select a schema from an empty training set")
    counts = chunk_counts(sentences)
    ranked = sorted(counts, key=lambda t: (-counts[t], t))
    if dataset == "atis":
        ranked = ranked[:ATIS_FIELD_COUNT]
    return FieldSchema(dataset, tuple(ranked))


@dataclass
class E2ERecord:
    """Raw tokens plus one value sequence per schema field."""

    tokens: list[str]
    fields: dict[str, list[str]] = field(default_factory=dict)

    @property
    def input_tokens(self) -> list[str]:
        return prepare_input(self.tokens)

    def target(self, name: str) -> list[str]:
        """Field value followed by the EOS terminator."""
        return list(self.fields.get(name, [])) + [EOS]

    def to_json(self) -> str:
        return json.dumps({"input": self.tokens, "fields": self.fields}, ensure_ascii=False)

    @classmethod
    def from_obj(cls, obj: dict) -> "E2ERecord":
        if "input" not in obj:
            raise ValueError("record is missing the 'input' key")
        fields = obj.get("fields", {})
        return cls(list(obj["input"]), {k: list(v) for k, v in fields.items()})


def prepare_input(tokens: Sequence[str]) -> list[str]:
    return [COMMA] + list(tokens) + [EOS]


def join_chunks(values: Sequence[Sequence[str]]) -> list[str]:
    out: list[str] = []
    for i, v in enumerate(values):
        if i:
            out.append(COMMA)
        out.extend(v)
    return out


def labels_to_fields(tokens: Sequence[str], labels: Sequence[str],
                     schema: FieldSchema) -> dict[str, list[str]]:
    by_field: dict[str, list[list[str]]] = {name: [] for name in schema.fields}
    for typ, s, e in bio_spans(labels):
        if typ in by_field:
            by_field[typ].append(list(tokens[s:e]))
    return {name: join_chunks(vals) for name, vals in by_field.items()}


def to_e2e(sentences: Iterable[BioSentence], schema: FieldSchema) -> list[E2ERecord]:
    return [E2ERecord(list(s.tokens), labels_to_fields(s.tokens, s.labels, schema))
            for s in sentences]


def write_records(path: PathLike, records: Iterable[E2ERecord]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
            n += 1
    return n


def read_records(path: PathLike) -> list[E2ERecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(E2ERecord.from_obj(json.loads(line)))
            except (json.JSONDecodeError, ValueError, AttributeError, TypeError) as exc:
                raise BioFormatError(f"bad E2E record: {exc}", lineno, path) from None
    return records


class Vocabulary:
    """Token/index map with PAD=0, UNK=1, EOS=2 and the comma at 3."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(self.itos)}
        for t in tokens:
            if t not in self.stoi:
                self.stoi[t] = len(self.itos)
                self.itos.append(t)

    pad = property(lambda self: 0)
    unk = property(lambda self: 1)
    eos = property(lambda self: 2)
    comma = property(lambda self: 3)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, self.unk)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, 1) for t in tokens]

    def token(self, idx: int) -> str:
        return self.itos[idx]

    def to_list(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "Vocabulary":
        if tuple(itos[:len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary does not start with the reserved symbols")
        return cls(itos[len(RESERVED):])

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos


def build_vocab(sequences: Iterable[Union[E2ERecord, Sequence[str]]], min_count: int = 1) -> Vocabulary:
    """Vocabulary over input tokens; words rarer than ``min_count`` stay UNK.

    Order is by descending frequency then lexicographic, so the result does
    not depend on record order.
    """
    counts: Counter = Counter()
    for seq in sequences:
        toks = seq.tokens if isinstance(seq, E2ERecord) else seq
        counts.update(toks)
    kept = sorted((t for t, c in counts.items() if c >= min_count and t not in RESERVED),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(kept)
