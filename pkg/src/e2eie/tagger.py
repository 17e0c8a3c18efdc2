"""Token-level BIO tagging baseline.

Embedding -> Bi-LSTM -> forward LSTM -> linear projection with a softmax per
token. Predicted label sequences become E2E field values through the same
chunking and joining code used to build the E2E datasets.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import checkpoint
from .corpus import BioSentence, FieldSchema, Vocabulary, labels_to_fields
from .layers import (
    ParameterStore,
    bilstm_encode,
    embed,
    embedding_dropout_mask,
    init_embedding,
    init_lstm,
    lstm_sequence,
)
from .tensor import Tensor, add, cross_entropy, matmul, mul, reshape, softmax, stack, tensor_sum

MODEL_KIND = "baseline"


@dataclass
class TaggerConfig:
    labels: tuple[str, ...]
    embed_dim: int = 128
    hidden: int = 128
    embedding_dropout: float = 0.0

    def __post_init__(self):
        self.labels = tuple(self.labels)
        if "O" not in self.labels:
            raise ValueError("label set must contain 'O'")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate labels")

    @classmethod
    def from_sentences(cls, sentences: Sequence[BioSentence], **kw) -> "TaggerConfig":
        seen = {lab for s in sentences for lab in s.labels} | {"O"}
        return cls(tuple(sorted(seen, key=lambda lab: (lab != "O", lab))), **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TaggerConfig":
        return cls(**{**d, "labels": tuple(d["labels"])})


class TaggerModel:
    def __init__(self, config: TaggerConfig, vocab: Vocabulary, seed: int = 0, dtype=np.float32):
        self.config = config
        self.vocab = vocab
        self.label_index = {lab: i for i, lab in enumerate(config.labels)}
        self.params = ParameterStore(dtype)
        rng = np.random.default_rng(seed)
        c, s = config, self.params
        self.embedding = init_embedding(s, "embedding", len(vocab), c.embed_dim, rng)
        self.l1_fwd = init_lstm(s, "layer1.fwd", c.embed_dim, c.hidden, rng)
        self.l1_bwd = init_lstm(s, "layer1.bwd", c.embed_dim, c.hidden, rng)
        self.l2 = init_lstm(s, "layer2", 2 * c.hidden, c.hidden, rng)
        r = 1.0 / np.sqrt(c.hidden)
        self.W_out = s.create("output.W", rng.uniform(-r, r, (c.hidden, len(c.labels))))
        self.b_out = s.create("output.b", np.zeros(len(c.labels)))

    @property
    def dtype(self):
        return self.params.dtype

    def save(self, path) -> None:
        save_checkpoint(self, path)


def _pad(model: TaggerModel, token_lists: Sequence[Sequence[str]]) -> tuple[np.ndarray, np.ndarray]:
    B = len(token_lists)
    T = max(len(t) for t in token_lists)
    ids = np.zeros((B, T), dtype=np.int64)
    mask = np.zeros((B, T), dtype=bool)
    for b, toks in enumerate(token_lists):
        ids[b, :len(toks)] = model.vocab.encode(toks)
        mask[b, :len(toks)] = True
    return ids, mask


def label_probs(model: TaggerModel, token_lists: Sequence[Sequence[str]],
                training: bool = False, rng: Optional[np.random.Generator] = None) -> tuple[Tensor, np.ndarray]:
    """Per-token label distributions [B, T, L] and the padding mask."""
    ids, mask = _pad(model, token_lists)
    x = embed(model.embedding, ids)
    c = model.config
    if training and rng is not None and c.embedding_dropout > 0:
        x = mul(x, embedding_dropout_mask(ids, len(model.vocab), c.embedding_dropout, rng, model.dtype))
    h1 = bilstm_encode(model.l1_fwd, model.l1_bwd, x, mask)
    states, _ = lstm_sequence(model.l2, h1, mask)
    h2 = stack(states, axis=1)
    logits = add(matmul(h2, model.W_out), model.b_out)
    return softmax(logits), mask


def tagger_loss(model: TaggerModel, sentences: Union[BioSentence, Sequence[BioSentence]],
                training: bool = False, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Mean over sentences of the mean per-token negative log likelihood."""
    if isinstance(sentences, BioSentence):
        sentences = [sentences]
    for s in sentences:
        for lab in s.labels:
            if lab not in model.label_index:
                raise KeyError(f"label {lab!r} is not in the tagger's label set")
    probs, mask = label_probs(model, [s.tokens for s in sentences], training, rng)
    B, T, L = probs.shape
    gold = np.zeros((B, T), dtype=np.int64)
    for b, s in enumerate(sentences):
        gold[b, :len(s)] = [model.label_index[lab] for lab in s.labels]
    ce = reshape(cross_entropy(reshape(probs, (B * T, L)), gold.reshape(-1)), (B, T))
    weights = mask / mask.sum(axis=1, keepdims=True)
    return mul(tensor_sum(mul(ce, weights.astype(model.dtype))), 1.0 / B)


def tag(model: TaggerModel, token_lists: Sequence[Sequence[str]]) -> list[list[str]]:
    """Argmax label per token; no transition constraints are imposed."""
    token_lists = list(token_lists)
    if not token_lists:
        return []
    if isinstance(token_lists[0], str):
        raise TypeError("tag() expects a list of token lists")
    for toks in token_lists:
        if not toks:
            raise ValueError("cannot tag an empty token sequence")
    probs, _ = label_probs(model, token_lists)
    best = np.argmax(probs.data, axis=-1)
    labels = model.config.labels
    return [[labels[i] for i in best[b, :len(toks)]] for b, toks in enumerate(token_lists)]


def baseline_to_e2e(tokens: Sequence[str], labels: Sequence[str], schema: FieldSchema) -> dict[str, list[str]]:
    """Field values from predicted labels, exactly as the E2E data is built."""
    return labels_to_fields(tokens, labels, schema)


def save_checkpoint(model: TaggerModel, path: Union[str, Path]) -> None:
    checkpoint.save(path, MODEL_KIND, model.config.to_dict(), model.vocab.to_list(), model.params)


def load_checkpoint(path: Union[str, Path]) -> TaggerModel:
    kind, header, arrays = checkpoint.load(path)
    if kind != MODEL_KIND:
        raise checkpoint.CheckpointError(f"{path} holds a {kind!r} model, not a baseline tagger")
    model = TaggerModel(TaggerConfig.from_dict(header["config"]), Vocabulary.from_list(header["vocab"]))
    model.params.restore(arrays)
    return model
