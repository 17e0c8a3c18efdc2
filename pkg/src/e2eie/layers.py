"""Recurrent and attention building blocks on top of :mod:`e2eie.tensor`.

All sequence functions work on batches laid out as [B, T, features] with an
optional boolean mask [B, T] marking real (non-padding) positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    add,
    apply_dropout,
    concat,
    embedding_lookup,
    getitem,
    matmul,
    mul,
    reshape,
    sigmoid,
    softmax,
    stack,
    tanh,
)

FORGET_BIAS = 1.0
EMBED_INIT = 0.1


class ParameterStore(dict):
    """Ordered mapping of parameter name to trainable :class:`Tensor`."""

    def __init__(self, dtype=np.float32):
        super().__init__()
        self.dtype = np.dtype(dtype)

    def create(self, name: str, values: np.ndarray) -> Tensor:
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(values, dtype=self.dtype), requires_grad=True)
        self[name] = t
        return t

    def zero_grad(self) -> None:
        for t in self.values():
            t.zero_grad()

    def size(self) -> int:
        return sum(t.data.size for t in self.values())

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.items()}

    def restore(self, values: dict[str, np.ndarray]) -> None:
        missing = set(self) ^ set(values)
        if missing:
            raise KeyError(f"parameter sets differ: {sorted(missing)}")
        for k, t in self.items():
            if values[k].shape != t.shape:
                raise ShapeError(f"restore {k}", t.shape, values[k].shape)
            t.data = np.array(values[k], dtype=self.dtype, copy=True)


def _uniform(rng: np.random.Generator, shape, r: float) -> np.ndarray:
    return rng.uniform(-r, r, size=shape)


@dataclass
class EmbeddingParams:
    vocab_size: int
    dim: int
    table: Tensor


@dataclass
class LstmCellParams:
    """Fused gate weights, gate order (input, forget, cell, output).

    Together ``W_x`` and ``W_h`` map the (input_size + hidden_size)
    concatenation to 4 * hidden_size gate pre-activations.
    """

    input_size: int
    hidden_size: int
    W_x: Tensor
    W_h: Tensor
    b: Tensor


@dataclass
class AttentionParams:
    W_e: Tensor
    W_d: Tensor
    v: Tensor

    @property
    def attn_dim(self) -> int:
        return self.v.shape[0]


def init_embedding(store: ParameterStore, name: str, vocab_size: int, dim: int,
                   rng: np.random.Generator) -> EmbeddingParams:
    table = store.create(name, _uniform(rng, (vocab_size, dim), EMBED_INIT))
    return EmbeddingParams(vocab_size, dim, table)


def init_lstm(store: ParameterStore, prefix: str, input_size: int, hidden_size: int,
              rng: np.random.Generator) -> LstmCellParams:
    r = 1.0 / np.sqrt(hidden_size)
    H = hidden_size
    bias = np.zeros(4 * H)
    bias[H:2 * H] = FORGET_BIAS
    return LstmCellParams(
        input_size,
        hidden_size,
        store.create(f"{prefix}.W_x", _uniform(rng, (input_size, 4 * H), r)),
        store.create(f"{prefix}.W_h", _uniform(rng, (H, 4 * H), r)),
        store.create(f"{prefix}.b", bias),
    )


def init_attention(store: ParameterStore, prefix: str, enc_dim: int, dec_dim: int,
                   attn_dim: int, rng: np.random.Generator) -> AttentionParams:
    r = 1.0 / np.sqrt(attn_dim)
    return AttentionParams(
        store.create(f"{prefix}.W_e", _uniform(rng, (enc_dim, attn_dim), r)),
        store.create(f"{prefix}.W_d", _uniform(rng, (dec_dim, attn_dim), r)),
        store.create(f"{prefix}.v", _uniform(rng, (attn_dim,), r)),
    )


def embed(p: EmbeddingParams, ids) -> Tensor:
    return embedding_lookup(p.table, ids)


# --- LSTM ------------------------------------------------------------------


def _cell(p: LstmCellParams, x_proj: Tensor, h_prev: Tensor, c_prev: Tensor,
          h_dropout: Optional[Tensor]) -> tuple[Tensor, Tensor]:
    if h_dropout is not None:
        h_prev_in = apply_dropout(h_prev, h_dropout)
    else:
        h_prev_in = h_prev
    z = add(x_proj, matmul(h_prev_in, p.W_h))
    H = p.hidden_size
    i = sigmoid(z[..., 0:H])
    f = sigmoid(z[..., H:2 * H])
    g = tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:4 * H])
    c = add(mul(f, c_prev), mul(i, g))
    h = mul(o, tanh(c))
    return h, c


def lstm_step(p: LstmCellParams, x: Tensor, h_prev: Tensor, c_prev: Tensor,
              h_dropout: Optional[Tensor] = None) -> tuple[Tensor, Tensor]:
    """One LSTM transition; ``x`` is [..., input_size], states [..., hidden]."""
    if x.shape[-1] != p.input_size:
        raise ShapeError("lstm_step input", x.shape, (p.input_size,))
    if h_prev.shape[-1] != p.hidden_size or c_prev.shape != h_prev.shape:
        raise ShapeError("lstm_step state", h_prev.shape, c_prev.shape)
    x_proj = add(matmul(x, p.W_x), p.b)
    return _cell(p, x_proj, h_prev, c_prev, h_dropout)


def _zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


def lstm_sequence(p: LstmCellParams, xs: Tensor, mask=None, reverse: bool = False,
                  h0: Optional[Tensor] = None, c0: Optional[Tensor] = None,
                  h_dropout: Optional[Tensor] = None) -> tuple[list[Tensor], tuple[Tensor, Tensor]]:
    """Run an LSTM over ``xs`` [B, T, input_size].

    At padded positions (``mask`` False) the state is carried through
    unchanged, so the final state is the state after each sequence's last
    real token and a reversed pass starts at that token. ``h_dropout`` is
    one [B, hidden] mask reused at every step.

    Returns the per-step hidden states (time order) and the final (h, c).
    """
    if xs.ndim != 3 or xs.shape[2] != p.input_size:
        raise ShapeError("lstm_sequence", xs.shape, (None, None, p.input_size))
    B, T, _ = xs.shape
    dtype = p.W_x.dtype
    h = h0 if h0 is not None else _zeros((B, p.hidden_size), dtype)
    c = c0 if c0 is not None else _zeros((B, p.hidden_size), dtype)
    if h.shape != (B, p.hidden_size):
        h = add(h, _zeros((B, p.hidden_size), dtype))
        c = add(c, _zeros((B, p.hidden_size), dtype))
    x_proj = add(matmul(xs, p.W_x), p.b)
    m = None if mask is None else np.asarray(mask, dtype=bool)
    outs: list[Optional[Tensor]] = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        h_new, c_new = _cell(p, getitem(x_proj, (slice(None), t)), h, c, h_dropout)
        if m is not None and not m[:, t].all():
            keep = m[:, t:t + 1].astype(dtype)
            h = add(mul(h_new, keep), mul(h, 1.0 - keep))
            c = add(mul(c_new, keep), mul(c, 1.0 - keep))
        else:
            h, c = h_new, c_new
        outs[t] = h
    return outs, (h, c)


def _as_batch(xs: Union[Tensor, Sequence[Tensor]]) -> Tensor:
    if isinstance(xs, Tensor):
        return xs
    if len(xs) == 0:
        raise ValueError("empty sequence")
    steps = list(xs)
    if steps[0].ndim == 1:
        steps = [reshape(s, (1, s.shape[0])) for s in steps]
    return stack(steps, axis=1)


def bilstm_encode(fwd: LstmCellParams, bwd: LstmCellParams,
                  xs: Union[Tensor, Sequence[Tensor]], mask=None,
                  h_dropout: Optional[tuple[Tensor, Tensor]] = None) -> Tensor:
    """Bidirectional encoding; output [B, T, 2 * hidden].

    Position i holds [forward state at i ; backward state at i]. ``xs`` is
    either [B, T, input] or a non-empty list of per-step [B, input] / [input]
    tensors.
    """
    xs = _as_batch(xs)
    if xs.shape[1] == 0:
        raise ValueError("bilstm_encode: empty sequence")
    fd, bd = h_dropout if h_dropout is not None else (None, None)
    f_outs, _ = lstm_sequence(fwd, xs, mask, reverse=False, h_dropout=fd)
    b_outs, _ = lstm_sequence(bwd, xs, mask, reverse=True, h_dropout=bd)
    return concat([stack(f_outs, axis=1), stack(b_outs, axis=1)], axis=-1)


# --- attention -------------------------------------------------------------


def project_encoder(p: AttentionParams, enc_outs: Tensor) -> Tensor:
    """Encoder-side term ``enc_i @ W_e``; computed once per input."""
    return matmul(enc_outs, p.W_e)


def attention_scores(p: AttentionParams, d_state: Tensor, enc_outs: Optional[Tensor], pad_mask,
                     enc_proj: Optional[Tensor] = None) -> Tensor:
    """Additive attention weights ``softmax_i(v . tanh(W_e enc_i + W_d d))``.

    ``enc_outs`` is [B, N, enc_dim] and ``pad_mask`` [B, N] (True = attendable).
    ``d_state`` is either one decoder state per sequence [B, dec_dim], giving
    weights [B, N], or a run of states [B, M, dec_dim], giving [B, M, N].
    Pass ``enc_proj`` from :func:`project_encoder` to skip recomputing it.
    """
    if enc_proj is None:
        if enc_outs is None:
            raise ValueError("need enc_outs or enc_proj")
        enc_proj = project_encoder(p, enc_outs)
    B, N, A = enc_proj.shape
    if N == 0:
        raise ValueError("attention over an empty input")
    mask = np.ones((B, N), dtype=bool) if pad_mask is None else np.asarray(pad_mask, dtype=bool)
    if mask.shape != (B, N):
        raise ShapeError("attention mask", mask.shape, (B, N))
    d_proj = matmul(d_state, p.W_d)
    v_col = reshape(p.v, (A, 1))
    if d_state.ndim == 2:
        pre = tanh(add(enc_proj, reshape(d_proj, (B, 1, A))))
        scores = reshape(matmul(pre, v_col), (B, N))
        return softmax(scores, mask)
    M = d_state.shape[1]
    pre = tanh(add(reshape(enc_proj, (B, 1, N, A)), reshape(d_proj, (B, M, 1, A))))
    scores = reshape(matmul(pre, v_col), (B, M, N))
    full_mask = np.broadcast_to(mask[:, None, :], (B, M, N))
    return softmax(scores, full_mask)


# --- dropout ---------------------------------------------------------------


def variational_dropout(shape, rate: float, rng: np.random.Generator, dtype=np.float32) -> Tensor:
    """Bernoulli keep-mask scaled by 1/(1 - rate).

    Sample once per sequence and reuse the returned tensor at every timestep.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0.0:
        return Tensor(np.ones(shape, dtype=dtype))
    keep = rng.random(shape) >= rate
    return Tensor((keep / (1.0 - rate)).astype(dtype))


def embedding_dropout_mask(token_ids: np.ndarray, vocab_size: int, rate: float,
                           rng: np.random.Generator, dtype=np.float32) -> Tensor:
    """Word-type dropout: per sequence, each vocabulary row is kept or dropped.

    Every occurrence of a dropped word in that sequence loses its whole
    embedding row. Returns a [B, T, 1] mask to multiply the embeddings by.
    """
    ids = np.asarray(token_ids)
    B = ids.shape[0]
    per_type = variational_dropout((B, vocab_size), rate, rng, dtype).data
    return Tensor(per_type[np.arange(B)[:, None], ids][..., None])

