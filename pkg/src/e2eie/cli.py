"""Command line interface: convert, train, predict, evaluate, significance, selfcheck.

Exit codes: 0 success, 2 bad input (files, formats, configs, data that a
command cannot work with), 3 internal failure (a failed self-check, an
aborted training run or an unexpected error).

Option precedence: explicit flag > value from ``--config`` > built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import checkpoint, selfcheck
from .corpus import (
    DATASET_KINDS,
    BioFormatError,
    BioSentence,
    E2ERecord,
    FieldSchema,
    chunk_counts,
    parse_bio,
    read_bio,
    read_records,
    select_schema,
    to_e2e,
    write_bio,
    write_records,
)
from .evaluation import DEFAULT_RESAMPLES, SchemaMismatchError, bootstrap_significance, chunk_f1, muc5_score
from .pointer import load_checkpoint as load_pointer
from .tagger import load_checkpoint as load_tagger
from .tasks import baseline_predictions, predict_records, tag_sentences, train_pointer, train_tagger
from .training import ConfigError, TrainConfig, TrainingAborted

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_INTERNAL = 3
DEFAULT_SEED = 42

log = logging.getLogger("e2eie")


class InputError(Exception):
    pass


def _config_values(path: Optional[str]) -> dict:
    if not path:
        return {}
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    if not isinstance(d, dict):
        raise InputError(f"config {path} must hold a JSON object")
    return d


def _opt(args, name: str, cfg: dict, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return cfg.get(name, default)


# --- convert ---------------------------------------------------------------


def cmd_convert(args) -> int:
    cfg = _config_values(args.config)
    sentences = read_bio(args.bio)
    if args.schema:
        schema = FieldSchema.load(args.schema)
    elif sentences:
        schema = select_schema(sentences, args.dataset)
    else:
        schema = FieldSchema(args.dataset, ())
    out = _opt(args, "out", cfg, None) or str(Path(args.bio).with_suffix(".e2e.jsonl"))
    n = write_records(out, to_e2e(sentences, schema))
    if args.schema_out:
        schema.save(args.schema_out)
    if n == 0:
        print(f"warning: {args.bio} holds no sentences", file=sys.stderr)
    counts = chunk_counts(sentences)
    print(f"records: {n}")
    print(f"fields: {len(schema)}")
    for name in schema.fields:
        print(f"  {name}\t{counts.get(name, 0)} chunks")
    dropped = sum(c for t, c in counts.items() if t not in schema.fields)
    if dropped:
        print(f"  (dropped {dropped} chunks of types outside the schema)")
    print(f"wrote {out}")
    return EXIT_OK


# --- train -----------------------------------------------------------------

_TRAIN_FLAGS = ("lr", "batch_size", "max_updates", "eval_every", "patience", "validation_fraction",
                "seed", "model", "dataset", "variant", "train_path", "validation_path", "schema_path")


def _train_config(args) -> TrainConfig:
    base = TrainConfig.load(args.config) if args.config else TrainConfig()
    d = base.to_dict()
    for name in _TRAIN_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            d[name] = v
    return TrainConfig.from_dict(d)


def _schema_for_records(records: list[E2ERecord], schema_path: Optional[str], dataset: str) -> FieldSchema:
    if schema_path:
        return FieldSchema.load(schema_path)
    if not records:
        raise InputError("cannot infer a schema from an empty record file")
    return FieldSchema(dataset, tuple(records[0].fields))


def cmd_train(args) -> int:
    cfg = _train_config(args)
    if not cfg.train_path:
        raise ConfigError("train_path: required (--train or config file)")
    out_dir = Path(args.out or "run")
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = out_dir / "model.ckpt"
    log_path = out_dir / "train_log.tsv"
    cfg.save(out_dir / "config.json")

    if cfg.model == "pointer":
        records = read_records(cfg.train_path)
        schema = _schema_for_records(records, cfg.schema_path, cfg.dataset)
        val = read_records(cfg.validation_path) if cfg.validation_path else None
        for r in records[:1]:
            if set(r.fields) != set(schema.fields):
                raise InputError("training records do not match the schema fields")
        schema.save(out_dir / "schema.json")
        fit = lambda: train_pointer(records, schema, cfg, val, log_path=log_path, checkpoint_path=ckpt)  # noqa: E731
    else:
        sentences = read_bio(cfg.train_path)
        if not sentences:
            raise InputError(f"{cfg.train_path} holds no sentences")
        val = read_bio(cfg.validation_path) if cfg.validation_path else None
        schema = FieldSchema.load(cfg.schema_path) if cfg.schema_path else select_schema(sentences, cfg.dataset)
        schema.save(out_dir / "schema.json")
        fit = lambda: train_tagger(sentences, cfg, val, log_path=log_path, checkpoint_path=ckpt)  # noqa: E731

    try:
        _, result = fit()
    except TrainingAborted as exc:
        print(f"training aborted: {exc}; best checkpoint kept at {ckpt}", file=sys.stderr)
        return EXIT_INTERNAL
    print(f"updates: {result.updates}")
    print(f"best validation metric: {result.best_metric:.4f} (update {result.best_update})")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


# --- predict ---------------------------------------------------------------


def _read_inputs(path: str, fmt: str):
    """Return (token lists, records or None, bio sentences or None)."""
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "auto":
        first = next((ln.strip() for ln in text.splitlines() if ln.strip()), "")
        fmt = "e2e" if first.startswith("{") else "tokens"
    if fmt == "e2e":
        recs = read_records(path)
        return [r.tokens for r in recs], recs, None
    if fmt == "bio":
        sents = parse_bio(text.splitlines(), path)
        return [s.tokens for s in sents], None, sents
    return [ln.split() for ln in text.splitlines() if ln.strip()], None, None


def cmd_predict(args) -> int:
    cfg = _config_values(args.config)
    kind = checkpoint.peek_kind(args.checkpoint)
    tokens, records, _ = _read_inputs(args.input, args.format)
    out = _opt(args, "out", cfg, None) or "predictions.jsonl"
    if kind == "pointer":
        model = load_pointer(args.checkpoint)
        fields = model.config.fields
        if records is not None:
            for i, r in enumerate(records):
                if r.fields and set(r.fields) != set(fields):
                    raise InputError(f"record {i}: fields {sorted(r.fields)} do not match the checkpoint "
                                     f"schema {sorted(fields)}")
        preds = predict_records(model, tokens) if tokens else []
    elif kind == "baseline":
        model = load_tagger(args.checkpoint)
        schema_path = _opt(args, "schema", cfg, None)
        if schema_path:
            schema = FieldSchema.load(schema_path)
        else:
            types = sorted({lab[2:] for lab in model.config.labels if lab != "O"})
            schema = FieldSchema("baseline", tuple(types))
        fields = schema.fields
        preds = baseline_predictions(model, tokens, schema) if tokens else []
        if args.bio_out:
            labels = tag_sentences(model, tokens) if tokens else []
            write_bio(args.bio_out, [BioSentence(list(t), lab) for t, lab in zip(tokens, labels)])
    else:
        raise InputError(f"unknown checkpoint kind {kind!r}")
    write_records(out, [E2ERecord(list(t), {f: p[f] for f in fields}) for t, p in zip(tokens, preds)])
    print(f"predicted {len(preds)} records -> {out}")
    return EXIT_OK


# --- evaluate / significance -----------------------------------------------


def _field_maps(path: str) -> list[dict]:
    return [r.fields for r in read_records(path)]


def _check_inputs_aligned(pred_path: str, gold_path: str) -> None:
    p, g = read_records(pred_path), read_records(gold_path)
    for i, (a, b) in enumerate(zip(p, g)):
        if a.tokens != b.tokens:
            raise InputError(f"record {i}: input tokens differ between {pred_path} and {gold_path}")


def cmd_evaluate(args) -> int:
    cfg = _config_values(args.config)
    out = _opt(args, "out", cfg, None)
    if args.format == "bio":
        pred, gold = read_bio(args.pred), read_bio(args.gold)
        p, r, f = chunk_f1(pred, gold)
        result = {"precision": p, "recall": r, "f1": f, "sentences": len(gold)}
        print(f"chunk P {p:.4f}  R {r:.4f}  F1 {f:.4f}  ({len(gold)} sentences)")
        if out:
            Path(out).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8")
        return EXIT_OK
    _check_inputs_aligned(args.pred, args.gold)
    report = muc5_score(_field_maps(args.pred), _field_maps(args.gold))
    print(report.to_text())
    if out:
        Path(out).write_text(report.to_json() + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_significance(args) -> int:
    cfg = _config_values(args.config)
    resamples = int(_opt(args, "resamples", cfg, DEFAULT_RESAMPLES))
    seed = int(_opt(args, "seed", cfg, DEFAULT_SEED))
    out = _opt(args, "out", cfg, None)
    _check_inputs_aligned(args.pred_a, args.gold)
    _check_inputs_aligned(args.pred_b, args.gold)
    res = bootstrap_significance(_field_maps(args.pred_a), _field_maps(args.pred_b), _field_maps(args.gold),
                                 resamples=resamples, seed=seed)
    names = {"A": args.pred_a, "B": args.pred_b}
    print(f"micro F1 A: {res.f1_a:.4f}  B: {res.f1_b:.4f}")
    print(f"better: {res.better} ({names[res.better]})")
    print(f"p: {res.p:.4f}")
    print(f"resamples: {res.resamples}  seed: {seed}")
    if out:
        Path(out).write_text(json.dumps(res.to_dict(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    return EXIT_OK if selfcheck.run() else EXIT_INTERNAL


# --- parser ----------------------------------------------------------------


def _common(p: argparse.ArgumentParser, seed: bool = True) -> None:
    p.add_argument("--config", help="JSON file with option values (flags take precedence)")
    p.add_argument("--out", help="output path")
    if seed:
        p.add_argument("--seed", type=int, default=None, help=f"random seed (default {DEFAULT_SEED})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="e2eie", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="BIO corpus -> E2E record file + schema manifest")
    p.add_argument("bio")
    p.add_argument("--dataset", choices=DATASET_KINDS, default="atis")
    p.add_argument("--schema", help="reuse this schema manifest instead of selecting one")
    p.add_argument("--schema-out", help="write the schema manifest here")
    _common(p)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("train", help="train the pointer model or the baseline tagger")
    p.add_argument("--model", choices=("pointer", "baseline"))
    p.add_argument("--train", dest="train_path", help="E2E records (pointer) or BIO file (baseline)")
    p.add_argument("--validation", dest="validation_path", help="explicit validation file")
    p.add_argument("--schema", dest="schema_path")
    p.add_argument("--dataset", choices=DATASET_KINDS)
    p.add_argument("--variant", choices=("base", "restaurant"))
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--max-updates", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--validation-fraction", type=float)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="decode field values with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("--format", choices=("auto", "e2e", "tokens", "bio"), default="auto")
    p.add_argument("--schema", help="schema manifest for baseline checkpoints")
    p.add_argument("--bio-out", help="baseline only: also write predicted BIO labels")
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="MUC-5 report (E2E files) or chunk F1 (BIO files)")
    p.add_argument("pred")
    p.add_argument("gold")
    p.add_argument("--format", choices=("e2e", "bio"), default="e2e")
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("significance", help="paired bootstrap test between two prediction files")
    p.add_argument("pred_a")
    p.add_argument("pred_b")
    p.add_argument("gold")
    p.add_argument("--resamples", type=int)
    _common(p)
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("selfcheck", help="run the fast invariant checks")
    _common(p)
    p.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, BioFormatError, ConfigError, SchemaMismatchError,
            checkpoint.CheckpointError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
