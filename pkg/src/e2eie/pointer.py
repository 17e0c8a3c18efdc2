"""Multi-decoder pointer network for end-to-end field extraction.

A shared Bi-LSTM encodes the input once. Every schema field owns a decoder
(embedding, learned start symbol, LSTM with learned initial state, additive
attention, optional summarizer LSTM). A decoder's output at each step is the
attention over input positions folded onto word types, so it can only emit
words that occur in the input.

Word types are identified by their surface string. Two out-of-vocabulary
words share the UNK embedding but remain distinct outputs.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import checkpoint
from .corpus import EOS, E2ERecord, Vocabulary, prepare_input
from .layers import (
    AttentionParams,
    EmbeddingParams,
    LstmCellParams,
    ParameterStore,
    attention_scores,
    bilstm_encode,
    embed,
    embedding_dropout_mask,
    init_attention,
    init_embedding,
    init_lstm,
    lstm_sequence,
    lstm_step,
    project_encoder,
    variational_dropout,
)
from .tensor import (
    Tensor,
    add,
    concat,
    cross_entropy,
    mul,
    reshape,
    stack,
    tensor_sum,
    weighted_sum,
)

MODEL_KIND = "pointer"


@dataclass
class PointerConfig:
    fields: tuple[str, ...]
    embed_dim: int = 96
    encoder_hidden: int = 128
    decoder_hidden: int = 128
    attn_dim: int = 128
    size_multiplier: int = 1
    use_summarizer: bool = False
    embedding_dropout: float = 0.0
    recurrent_dropout: float = 0.0
    # None: input length (after comma/EOS) + 5
    max_decode_len: Optional[int] = None

    def __post_init__(self):
        self.fields = tuple(self.fields)
        if not self.fields:
            raise ValueError("pointer model needs at least one field")
        if len(set(self.fields)) != len(self.fields):
            raise ValueError("duplicate field names")
        for name in ("embed_dim", "encoder_hidden", "decoder_hidden", "attn_dim", "size_multiplier"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("embedding_dropout", "recurrent_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")

    @classmethod
    def restaurant(cls, fields: Sequence[str], dropout: float = 0.25, **kw) -> "PointerConfig":
        """Doubled widths, embedding + recurrent dropout and summarizers."""
        return cls(tuple(fields), size_multiplier=2, use_summarizer=True,
                   embedding_dropout=dropout, recurrent_dropout=dropout, **kw)

    @property
    def emb(self) -> int:
        return self.embed_dim * self.size_multiplier

    @property
    def enc(self) -> int:
        return self.encoder_hidden * self.size_multiplier

    @property
    def dec(self) -> int:
        return self.decoder_hidden * self.size_multiplier

    @property
    def attn(self) -> int:
        return self.attn_dim * self.size_multiplier

    def decode_limit(self, input_len: int) -> int:
        return self.max_decode_len if self.max_decode_len is not None else input_len + 5

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fields"] = list(self.fields)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PointerConfig":
        return cls(**{**d, "fields": tuple(d["fields"])})


@dataclass
class DecoderParams:
    embedding: EmbeddingParams
    start: Tensor
    lstm: LstmCellParams
    h0: Tensor
    c0: Tensor
    attention: AttentionParams
    summarizer: Optional[LstmCellParams] = None


class PointerModel:
    """Parameters, configuration and vocabulary of one pointer network."""

    def __init__(self, config: PointerConfig, vocab: Vocabulary, seed: int = 0, dtype=np.float32):
        self.config = config
        self.vocab = vocab
        self.params = ParameterStore(dtype)
        rng = np.random.default_rng(seed)
        c = config
        V = len(vocab)
        store = self.params
        self.enc_embedding = init_embedding(store, "encoder.embedding", V, c.emb, rng)
        self.enc_fwd = init_lstm(store, "encoder.fwd", c.emb, c.enc, rng)
        self.enc_bwd = init_lstm(store, "encoder.bwd", c.emb, c.enc, rng)
        self.decoders: dict[str, DecoderParams] = {}
        dec_in = c.emb + (c.dec if c.use_summarizer else 0)
        for name in c.fields:
            pre = f"decoder.{name}"
            emb = init_embedding(store, f"{pre}.embedding", V, c.emb, rng)
            start = store.create(f"{pre}.start", rng.uniform(-0.1, 0.1, c.emb))
            lstm = init_lstm(store, f"{pre}.lstm", dec_in, c.dec, rng)
            h0 = store.create(f"{pre}.h0", np.zeros(c.dec))
            c0 = store.create(f"{pre}.c0", np.zeros(c.dec))
            att = init_attention(store, f"{pre}.attention", 2 * c.enc, c.dec, c.attn, rng)
            summ = init_lstm(store, f"{pre}.summarizer", 2 * c.enc, c.dec, rng) if c.use_summarizer else None
            self.decoders[name] = DecoderParams(emb, start, lstm, h0, c0, att, summ)

    @property
    def dtype(self):
        return self.params.dtype

    def save(self, path) -> None:
        save_checkpoint(self, path)


# --- batching --------------------------------------------------------------


@dataclass
class Batch:
    """Padded model inputs for a list of records.

    ``types[b]`` lists the word types of input ``b`` ordered by vocabulary
    index (then first occurrence); ``onehot`` maps every position to its type
    column. Column ``n_types`` is an always-empty column standing for targets
    that do not occur in the input.
    """

    inputs: list[list[str]]
    ids: np.ndarray  # [B, N] vocabulary ids, PAD filled
    mask: np.ndarray  # [B, N] bool
    types: list[list[str]]
    onehot: np.ndarray  # [B, N, n_types + 1]
    n_types: int
    targets: dict[str, "FieldTargets"] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.inputs)


@dataclass
class FieldTargets:
    prev_ids: np.ndarray  # [B, M] vocab id fed at each step (0 at step 0, replaced by start)
    gold: np.ndarray  # [B, M] type column of the target at each step
    step_mask: np.ndarray  # [B, M] bool
    lengths: np.ndarray  # [B] M_k including the EOS


def _type_order(tokens: Sequence[str], vocab: Vocabulary) -> list[str]:
    first: dict[str, int] = {}
    for i, t in enumerate(tokens):
        first.setdefault(t, i)
    return sorted(first, key=lambda t: (vocab.index(t), first[t]))


def make_batch(items: Sequence[Union[E2ERecord, Sequence[str]]], vocab: Vocabulary,
               fields: Sequence[str] = (), dtype=np.float32) -> Batch:
    """Pad records (or raw token lists) into a :class:`Batch`.

    Raw token lists get the comma/EOS wrapping here. Targets are built only
    for ``fields`` and only from :class:`E2ERecord` items.
    """
    if not items:
        raise ValueError("empty batch")
    inputs = [prepare_input(it.tokens if isinstance(it, E2ERecord) else it) for it in items]
    B = len(inputs)
    N = max(len(x) for x in inputs)
    ids = np.zeros((B, N), dtype=np.int64)
    mask = np.zeros((B, N), dtype=bool)
    types = [_type_order(x, vocab) for x in inputs]
    U = max(len(t) for t in types)
    onehot = np.zeros((B, N, U + 1), dtype=dtype)
    col: list[dict[str, int]] = []
    for b, x in enumerate(inputs):
        ids[b, :len(x)] = vocab.encode(x)
        mask[b, :len(x)] = True
        lookup = {t: i for i, t in enumerate(types[b])}
        col.append(lookup)
        onehot[b, np.arange(len(x)), [lookup[t] for t in x]] = 1.0
    batch = Batch(inputs, ids, mask, types, onehot, U)

    if fields and all(isinstance(it, E2ERecord) for it in items):
        for name in fields:
            seqs = [it.target(name) for it in items]
            M = max(len(s) for s in seqs)
            prev = np.zeros((B, M), dtype=np.int64)
            gold = np.zeros((B, M), dtype=np.int64)
            smask = np.zeros((B, M), dtype=bool)
            for b, s in enumerate(seqs):
                enc = vocab.encode(s)
                prev[b, 1:len(s)] = enc[:-1]
                gold[b, :len(s)] = [col[b].get(t, U) for t in s]
                smask[b, :len(s)] = True
            batch.targets[name] = FieldTargets(prev, gold, smask, np.array([len(s) for s in seqs]))
    return batch


# --- forward ---------------------------------------------------------------


def _encode(model: PointerModel, batch: Batch, training: bool, rng) -> Tensor:
    c = model.config
    x = embed(model.enc_embedding, batch.ids)
    rec = None
    if training and rng is not None:
        if c.embedding_dropout > 0:
            x = mul(x, embedding_dropout_mask(batch.ids, len(model.vocab), c.embedding_dropout, rng, model.dtype))
        if c.recurrent_dropout > 0:
            rec = tuple(variational_dropout((batch.size, c.enc), c.recurrent_dropout, rng, model.dtype)
                        for _ in range(2))
    return bilstm_encode(model.enc_fwd, model.enc_bwd, x, batch.mask, h_dropout=rec)


def _summarize(dec: DecoderParams, enc_outs: Tensor, batch: Batch, h_drop) -> Tensor:
    _, (h, _) = lstm_sequence(dec.summarizer, enc_outs, batch.mask, h_dropout=h_drop)
    return h


def _broadcast_rows(vec: Tensor, lead: tuple) -> Tensor:
    # learned vector [D] repeated over leading axes; gradient sums back
    return add(reshape(vec, (1,) * len(lead) + (vec.shape[0],)),
               Tensor(np.zeros(lead + (vec.shape[0],), dtype=vec.dtype)))


def output_distribution(att: Tensor, batch: Batch) -> Tensor:
    """Fold attention over positions onto word-type columns.

    ``att`` is [B, N] or [B, M, N]; the result has ``n_types + 1`` columns and
    puts the summed weight of every occurrence of a word on that word.
    """
    onehot = batch.onehot
    if att.ndim == 3:
        B, M, N = att.shape
        onehot = np.broadcast_to(onehot[:, None], (B, M) + onehot.shape[1:])
    return weighted_sum(att, Tensor(onehot))


def field_loss(att: Tensor, batch: Batch, name: str) -> tuple[Tensor, np.ndarray]:
    """Length-normalised cross entropy of one field, summed over the batch.

    ``att`` holds teacher-forced attention weights [B, M, N]. Returns the
    summed loss and the per-step output distributions as an array.
    """
    tg = batch.targets[name]
    probs = output_distribution(att, batch)
    B, M, C = probs.shape
    ce = reshape(cross_entropy(reshape(probs, (B * M, C)), tg.gold.reshape(-1)), (B, M))
    weights = tg.step_mask / tg.lengths[:, None]
    return tensor_sum(mul(ce, weights.astype(probs.dtype))), probs.data


def forward_loss(model: PointerModel, records: Union[E2ERecord, Sequence[E2ERecord]],
                 training: bool = False, rng: Optional[np.random.Generator] = None,
                 batch: Optional[Batch] = None) -> tuple[Tensor, dict]:
    """Teacher-forced loss, averaged over the records in the batch.

    Per record the loss is the sum over fields of the mean negative log
    probability of each target token (the value tokens and the final EOS).
    Dropout only applies with ``training=True`` and an ``rng``.
    """
    if isinstance(records, E2ERecord):
        records = [records]
    c = model.config
    if batch is None:
        batch = make_batch(records, model.vocab, c.fields, model.dtype)
    enc_outs = _encode(model, batch, training, rng)
    drop = training and rng is not None
    B = batch.size
    total = None
    diag: dict = {"attention": {}, "distributions": {}, "field_loss": {}}
    for name in c.fields:
        dec = model.decoders[name]
        tg = batch.targets[name]
        M = tg.prev_ids.shape[1]
        start = _broadcast_rows(dec.start, (B, 1))
        if M > 1:
            prev = embed(dec.embedding, tg.prev_ids[:, 1:])
            if drop and c.embedding_dropout > 0:
                prev = mul(prev, embedding_dropout_mask(tg.prev_ids[:, 1:], len(model.vocab),
                                                        c.embedding_dropout, rng, model.dtype))
            inputs = concat([start, prev], axis=1)
        else:
            inputs = start
        h_drop = None
        if drop and c.recurrent_dropout > 0:
            h_drop = variational_dropout((B, c.dec), c.recurrent_dropout, rng, model.dtype)
        if dec.summarizer is not None:
            s_drop = None
            if drop and c.recurrent_dropout > 0:
                s_drop = variational_dropout((B, c.dec), c.recurrent_dropout, rng, model.dtype)
            summary = _summarize(dec, enc_outs, batch, s_drop)
            summary = add(reshape(summary, (B, 1, c.dec)), Tensor(np.zeros((B, M, c.dec), dtype=model.dtype)))
            inputs = concat([inputs, summary], axis=-1)
        states, _ = lstm_sequence(dec.lstm, inputs, tg.step_mask, h0=dec.h0, c0=dec.c0, h_dropout=h_drop)
        d = stack(states, axis=1)
        enc_proj = project_encoder(dec.attention, enc_outs)
        att = attention_scores(dec.attention, d, None, batch.mask, enc_proj=enc_proj)
        loss_k, probs = field_loss(att, batch, name)
        diag["attention"][name] = att.data
        diag["distributions"][name] = probs
        diag["field_loss"][name] = float(loss_k.data) / B
        total = loss_k if total is None else add(total, loss_k)
    loss = mul(total, 1.0 / B)
    diag["batch"] = batch
    return loss, diag


# --- decoding --------------------------------------------------------------


def decode(model: PointerModel, inputs: Sequence[Union[E2ERecord, Sequence[str]]],
           return_attention: bool = False):
    """Greedy decoding of every field for a batch of inputs.

    Each step emits the most probable input word type (ties go to the lowest
    vocabulary index) and feeds its embedding to the next step. A field stops
    at its first EOS or after the decode length limit.

    Returns one ``{field: tokens}`` dict per input (EOS excluded), plus the
    per-field attention traces when ``return_attention`` is set.
    """
    if len(inputs) == 0:
        return ([], {}) if return_attention else []
    c = model.config
    batch = make_batch(inputs, model.vocab, (), model.dtype)
    B = batch.size
    enc_outs = _encode(model, batch, False, None)
    limits = np.array([c.decode_limit(len(x)) for x in batch.inputs])
    results: list[dict[str, list[str]]] = [{} for _ in range(B)]
    traces: dict[str, list] = {}
    for name in c.fields:
        dec = model.decoders[name]
        enc_proj = project_encoder(dec.attention, enc_outs)
        summary = _summarize(dec, enc_outs, batch, None) if dec.summarizer is not None else None
        h = add(reshape(dec.h0, (1, c.dec)), Tensor(np.zeros((B, c.dec), dtype=model.dtype)))
        cst = add(reshape(dec.c0, (1, c.dec)), Tensor(np.zeros((B, c.dec), dtype=model.dtype)))
        x = _broadcast_rows(dec.start, (B,))
        out: list[list[str]] = [[] for _ in range(B)]
        done = np.zeros(B, dtype=bool)
        trace = []
        for step in range(int(limits.max())):
            done |= step >= limits
            if done.all():
                break
            inp = concat([x, summary], axis=-1) if summary is not None else x
            h, cst = lstm_step(dec.lstm, inp, h, cst)
            att = attention_scores(dec.attention, h, None, batch.mask, enc_proj=enc_proj)
            probs = output_distribution(att, batch).data[:, :batch.n_types]
            trace.append(att.data)
            choice = np.argmax(probs, axis=1)
            next_ids = np.zeros(B, dtype=np.int64)
            for b in range(B):
                if done[b]:
                    continue
                tok = batch.types[b][choice[b]]
                if tok == EOS:
                    done[b] = True
                else:
                    out[b].append(tok)
                next_ids[b] = model.vocab.index(tok)
            x = embed(dec.embedding, next_ids)
        for b in range(B):
            results[b][name] = out[b]
        traces[name] = trace
    return (results, traces) if return_attention else results


def vocabulary_distribution(probs_row: np.ndarray, types: Sequence[str], vocab: Vocabulary) -> np.ndarray:
    """Map one type-column distribution onto vocabulary indices.

    Out-of-vocabulary types pool onto UNK, so the result is the distribution
    over vocabulary entries that one-hot vocabulary inputs would give.
    """
    out = np.zeros(len(vocab), dtype=np.float64)
    for i, t in enumerate(types):
        out[vocab.index(t)] += probs_row[i]
    return out


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(model: PointerModel, path: Union[str, Path]) -> None:
    checkpoint.save(path, MODEL_KIND, model.config.to_dict(), model.vocab.to_list(), model.params)


def load_checkpoint(path: Union[str, Path]) -> PointerModel:
    kind, header, arrays = checkpoint.load(path)
    if kind != MODEL_KIND:
        raise checkpoint.CheckpointError(f"{path} holds a {kind!r} model, not a pointer model")
    model = PointerModel(PointerConfig.from_dict(header["config"]), Vocabulary.from_list(header["vocab"]))
    model.params.restore(arrays)
    return model
