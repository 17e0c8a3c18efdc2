"""Training adapters for the pointer network and the baseline tagger."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .corpus import BioSentence, E2ERecord, FieldSchema, Vocabulary, build_vocab
from .evaluation import chunk_f1, muc5_score
from .pointer import PointerConfig, PointerModel, decode, forward_loss
from .pointer import save_checkpoint as save_pointer
from .tagger import TaggerConfig, TaggerModel, baseline_to_e2e, tag, tagger_loss
from .tagger import save_checkpoint as save_tagger
from .training import TrainConfig, TrainResult, derive_seed, train

EVAL_BATCH = 64


def predict_records(model: PointerModel, items: Sequence, batch_size: int = EVAL_BATCH) -> list[dict]:
    out: list[dict] = []
    for i in range(0, len(items), batch_size):
        out.extend(decode(model, items[i:i + batch_size]))
    return out


def tag_sentences(model: TaggerModel, token_lists: Sequence[Sequence[str]],
                  batch_size: int = EVAL_BATCH) -> list[list[str]]:
    out: list[list[str]] = []
    for i in range(0, len(token_lists), batch_size):
        out.extend(tag(model, token_lists[i:i + batch_size]))
    return out


class PointerTask:
    """Validation metric: micro F1 of greedy decodes under MUC-5 scoring."""

    def __init__(self, model: PointerModel):
        self.model = model
        self.params = model.params

    def loss(self, items, rng):
        loss, _ = forward_loss(self.model, items, training=True, rng=rng)
        return loss

    def evaluate(self, items: Sequence[E2ERecord]) -> float:
        preds = predict_records(self.model, items)
        fields = self.model.config.fields
        gold = [{f: r.fields.get(f, []) for f in fields} for r in items]
        return muc5_score(preds, gold, fields).f1

    def save(self, path) -> None:
        save_pointer(self.model, path)


class TaggerTask:
    """Validation metric: chunk F1 of the predicted BIO labels."""

    def __init__(self, model: TaggerModel):
        self.model = model
        self.params = model.params

    def loss(self, items, rng):
        return tagger_loss(self.model, items, training=True, rng=rng)

    def evaluate(self, items: Sequence[BioSentence]) -> float:
        pred = tag_sentences(self.model, [s.tokens for s in items])
        return chunk_f1(pred, [s.labels for s in items])[2]

    def save(self, path) -> None:
        save_tagger(self.model, path)


def pointer_config_for(fields: Sequence[str], variant: str = "base", **overrides) -> PointerConfig:
    if variant == "restaurant":
        return PointerConfig.restaurant(fields, **overrides)
    return PointerConfig(tuple(fields), **overrides)


def train_pointer(records: Sequence[E2ERecord], schema: FieldSchema, config: TrainConfig,
                  val_records: Optional[Sequence[E2ERecord]] = None,
                  model_config: Optional[PointerConfig] = None, dtype=np.float32,
                  **train_kw) -> tuple[PointerModel, TrainResult]:
    """Build a vocabulary from ``records``, then train with early stopping.

    The vocabulary covers all training records including the held-out
    validation share; only the optimizer never sees validation records.
    """
    vocab = build_vocab(records)
    mc = model_config or pointer_config_for(schema.fields, config.variant)
    model = PointerModel(mc, vocab, seed=derive_seed(config.seed, "init"), dtype=dtype)
    result = train(PointerTask(model), list(records), config, val_records, **train_kw)
    return model, result


def train_tagger(sentences: Sequence[BioSentence], config: TrainConfig,
                 val_sentences: Optional[Sequence[BioSentence]] = None,
                 tagger_config: Optional[TaggerConfig] = None, vocab: Optional[Vocabulary] = None,
                 dtype=np.float32, **train_kw) -> tuple[TaggerModel, TrainResult]:
    vocab = vocab or build_vocab([s.tokens for s in sentences])
    tc = tagger_config or TaggerConfig.from_sentences(sentences)
    model = TaggerModel(tc, vocab, seed=derive_seed(config.seed, "init"), dtype=dtype)
    result = train(TaggerTask(model), list(sentences), config, val_sentences, **train_kw)
    return model, result


def baseline_predictions(model: TaggerModel, token_lists: Sequence[Sequence[str]],
                         schema: FieldSchema) -> list[dict[str, list[str]]]:
    labels = tag_sentences(model, token_lists)
    return [baseline_to_e2e(toks, labs, schema) for toks, labs in zip(token_lists, labels)]
