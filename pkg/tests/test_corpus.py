import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from e2eie.corpus import (
    COMMA,
    EOS,
    RESERVED,
    BioFormatError,
    BioSentence,
    E2ERecord,
    FieldSchema,
    Vocabulary,
    bio_spans,
    build_vocab,
    chunk_bio,
    parse_bio,
    read_bio,
    read_records,
    select_schema,
    spans_to_labels,
    to_e2e,
    write_bio,
    write_records,
)
from e2eie.synthetic import random_bio_sentence

RESTAURANT_BLOCK = """2 B-Rating
start I-Rating
restaurants O
with O
inside B-Amenity
dining I-Amenity
"""

MOVIE_BLOCK = """show O
me O
films O
elvis B-ACTOR
films O
set B-PLOT
in I-PLOT
hawaii I-PLOT
"""

ATIS_FIELDS = ("fromloc", "toloc", "airline_name", "cost_relative", "period_of_day", "time",
               "time_relative", "day_name", "day_number", "month_name")
ATIS_TOKENS = "cheapest airfare from tacoma to st. louis and detroit".split()
ATIS_LABELS = ["B-cost_relative", "O", "O", "B-fromloc", "O", "B-toloc", "I-toloc", "O", "B-toloc"]


# --- reading ---------------------------------------------------------------


def test_restaurant_block_parses_verbatim():
    (s,) = parse_bio(RESTAURANT_BLOCK.splitlines(True))
    assert s.tokens == ["2", "start", "restaurants", "with", "inside", "dining"]
    assert s.labels == ["B-Rating", "I-Rating", "O", "O", "B-Amenity", "I-Amenity"]


def test_read_file_with_tabs_and_multiple_blocks(tmp_path):
    p = tmp_path / "x.bio"
    p.write_text(RESTAURANT_BLOCK.replace(" ", "\t") + "\n\n" + MOVIE_BLOCK, encoding="utf-8")
    a, b = read_bio(p)
    assert len(a) == 6 and len(b) == 8 and b.tokens[3] == "elvis"


def test_empty_file(tmp_path):
    p = tmp_path / "e.bio"
    p.write_text("")
    assert read_bio(p) == []


def test_single_token_file(tmp_path):
    p = tmp_path / "one.bio"
    p.write_text("hi O\n")
    (s,) = read_bio(p)
    assert s.tokens == ["hi"] and s.labels == ["O"]


def test_no_case_folding():
    (s,) = parse_bio(["Boston B-toloc\n"])
    assert s.tokens == ["Boston"]


@pytest.mark.parametrize("text,line", [
    ("a O\nb\n", 2),
    ("a O\n\nb O extra\n", 3),
    ("a O\nb X-city\n", 2),
    ("a O\nb B-\n", 2),
    ("a o\n", 1),
])
def test_malformed_lines_report_line_number(text, line, tmp_path):
    p = tmp_path / "bad.bio"
    p.write_text(text)
    with pytest.raises(BioFormatError) as err:
        read_bio(p)
    assert err.value.line == line
    assert f":{line}:" in str(err.value)


def test_sentence_length_mismatch():
    with pytest.raises(BioFormatError):
        BioSentence(["a", "b"], ["O"])


def test_write_read_round_trip(tmp_path):
    sents = parse_bio((RESTAURANT_BLOCK + "\n" + MOVIE_BLOCK).splitlines(True))
    write_bio(tmp_path / "r.bio", sents)
    assert read_bio(tmp_path / "r.bio") == sents


# --- chunking --------------------------------------------------------------


def test_chunk_restaurant_sample():
    (s,) = parse_bio(RESTAURANT_BLOCK.splitlines(True))
    assert chunk_bio(s) == [("Rating", ["2", "start"]), ("Amenity", ["inside", "dining"])]


def test_chunk_movie_sample():
    (s,) = parse_bio(MOVIE_BLOCK.splitlines(True))
    assert chunk_bio(s) == [("ACTOR", ["elvis"]), ("PLOT", ["set", "in", "hawaii"])]


def test_all_outside_has_no_chunks():
    assert chunk_bio(BioSentence(["a", "b"], ["O", "O"])) == []


@pytest.mark.parametrize("labels,spans", [
    (["I-X", "I-X"], [("X", 0, 2)]),
    (["O", "I-X", "O"], [("X", 1, 2)]),
    (["B-X", "I-Y"], [("X", 0, 1), ("Y", 1, 2)]),
    (["B-X", "B-X"], [("X", 0, 1), ("X", 1, 2)]),
    (["I-X", "B-X", "I-X"], [("X", 0, 1), ("X", 1, 3)]),
])
def test_lenient_repair(labels, spans):
    assert bio_spans(labels) == spans


# --- E2E construction ------------------------------------------------------


def test_atis_example_to_e2e():
    schema = FieldSchema("atis", ATIS_FIELDS)
    (rec,) = to_e2e([BioSentence(ATIS_TOKENS, ATIS_LABELS)], schema)
    assert rec.tokens == ATIS_TOKENS
    assert rec.input_tokens == [COMMA] + ATIS_TOKENS + [EOS]
    expect = {f: [] for f in ATIS_FIELDS}
    expect.update(fromloc=["tacoma"], toloc=["st.", "louis", ",", "detroit"], cost_relative=["cheapest"])
    assert rec.fields == expect
    assert list(rec.fields) == list(ATIS_FIELDS)
    assert rec.target("toloc") == ["st.", "louis", ",", "detroit", EOS]
    assert rec.target("time") == [EOS]


def test_chunks_outside_schema_are_dropped():
    (rec,) = to_e2e([BioSentence(ATIS_TOKENS, ATIS_LABELS)], FieldSchema("atis", ("toloc",)))
    assert rec.fields == {"toloc": ["st.", "louis", ",", "detroit"]}


def test_sentence_without_chunks_is_kept():
    recs = to_e2e([BioSentence(["hi"], ["O"])], FieldSchema("movie", ("A", "B")))
    assert len(recs) == 1 and recs[0].fields == {"A": [], "B": []}


def test_record_file_round_trip(tmp_path):
    schema = FieldSchema("atis", ATIS_FIELDS)
    recs = to_e2e([BioSentence(ATIS_TOKENS, ATIS_LABELS), BioSentence(["x"], ["O"])], schema)
    assert write_records(tmp_path / "r.jsonl", recs) == 2
    assert read_records(tmp_path / "r.jsonl") == recs
    first = json.loads((tmp_path / "r.jsonl").read_text().splitlines()[0])
    assert set(first) == {"input", "fields"} and first["input"] == ATIS_TOKENS


def test_bad_record_line(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text('{"input": ["a"], "fields": {}}\n{"fields": {}}\n')
    with pytest.raises(BioFormatError) as err:
        read_records(p)
    assert err.value.line == 2


# --- schema ----------------------------------------------------------------


def _corpus_with_types(types, rng, n=300):
    return [random_bio_sentence(rng, types, 12, 50) for _ in range(n)]


RESTAURANT_TYPES = ["Amenity", "Cuisine", "Dish", "Hours", "Location", "Price", "Rating", "Restaurant_Name"]
MOVIE_TYPES = ["ACTOR", "CHARACTER", "DIRECTOR", "GENRE", "PLOT", "RATING", "RATINGS_AVERAGE", "REVIEW",
               "SONG", "TITLE", "TRAILER", "YEAR"]


def test_schema_restaurant_style_keeps_all_eight(rng):
    assert set(select_schema(_corpus_with_types(RESTAURANT_TYPES, rng), "restaurant").fields) == set(RESTAURANT_TYPES)


def test_schema_movie_style_keeps_all_twelve(rng):
    assert len(select_schema(_corpus_with_types(MOVIE_TYPES, rng), "movie")) == 12


def test_schema_three_types(rng):
    schema = select_schema(_corpus_with_types(["a", "b", "c"], rng), "movie")
    assert sorted(schema.fields) == ["a", "b", "c"]


def test_atis_schema_takes_ten_most_frequent_chunk_types():
    sents = []
    for k in range(12):
        name = f"t{k:02d}"
        for _ in range(12 - k):
            sents.append(BioSentence(["w", "v"], [f"B-{name}", f"I-{name}"]))
    # one extra t11 chunk ties it with t10; lexicographic order decides
    sents.append(BioSentence(["w"], ["B-t11"]))
    schema = select_schema(sents, "atis")
    assert schema.fields == tuple(f"t{k:02d}" for k in range(10))


def test_schema_counts_chunks_not_tokens():
    sents = [BioSentence(["a", "b", "c", "d"], ["B-long", "I-long", "I-long", "I-long"]),
             BioSentence(["a", "b"], ["B-short", "B-short"])]
    assert select_schema(sents, "movie").fields == ("short", "long")


def test_schema_empty_training_set():
    with pytest.raises(ValueError):
        select_schema([], "atis")


def test_schema_manifest_round_trip(tmp_path):
    s = FieldSchema("atis", ATIS_FIELDS)
    s.save(tmp_path / "s.json")
    assert FieldSchema.load(tmp_path / "s.json") == s
    with pytest.raises(ValueError):
        FieldSchema("x", ("a", "a"))


# --- vocabulary ------------------------------------------------------------


def test_vocab_reserved_and_counts():
    v = build_vocab([["a", "b", "a"]])
    assert len(v) == 6 and v.itos[:4] == list(RESERVED)
    assert v.itos[4:] == ["a", "b"]
    assert v.index("zzz") == v.unk == 1
    assert [v.token(i) for i in v.encode(["a", "b"])] == ["a", "b"]


def test_vocab_min_count():
    v = build_vocab([["a", "b", "a"]], min_count=2)
    assert "b" not in v and v.index("b") == v.unk


def test_vocab_independent_of_record_order(rng):
    recs = [E2ERecord(s.tokens) for s in _corpus_with_types(["a", "b"], rng, 50)]
    v1 = build_vocab(recs)
    v2 = build_vocab(list(reversed(recs)))
    assert v1 == v2 and len(v1) == len(build_vocab(recs))
    assert Vocabulary.from_list(v1.to_list()) == v1


# --- randomized invariants -------------------------------------------------


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_and_soundness(seed):
    rng = np.random.default_rng(seed)
    s = random_bio_sentence(rng, ["A", "B", "C"], 10, 8, stray_i=False)
    assert spans_to_labels(len(s), bio_spans(s.labels)) == s.labels
    schema = FieldSchema("movie", ("A", "B", "C"))
    (rec,) = to_e2e([s], schema)
    inp = set(rec.input_tokens)
    for name in schema.fields:
        assert all(t in inp for t in rec.fields[name])
    chunks = chunk_bio(s)
    for name in schema.fields:
        values = [toks for typ, toks in chunks if typ == name]
        rebuilt = []
        for i, v in enumerate(values):
            rebuilt += ([COMMA] if i else []) + v
        assert rec.fields[name] == rebuilt
