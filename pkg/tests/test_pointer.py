import numpy as np
import pytest

from e2eie import checkpoint
from e2eie.corpus import EOS, E2ERecord, build_vocab, prepare_input
from e2eie.gradcheck import check_gradients
from e2eie.pointer import (
    PointerConfig,
    PointerModel,
    decode,
    field_loss,
    forward_loss,
    load_checkpoint,
    make_batch,
    output_distribution,
    save_checkpoint,
    vocabulary_distribution,
)
from e2eie.tensor import CE_FLOOR, Tape, Tensor
from e2eie.training import AdamState, adam_step

TOY = [
    E2ERecord(["fly", "from", "boston", "to", "denver"], {"from": ["boston"], "to": ["denver"]}),
    E2ERecord(["to", "st.", "louis", "and", "denver", "please"], {"from": [], "to": ["st.", "louis", ",", "denver"]}),
    E2ERecord(["boston", "boston", "to", "tacoma"], {"from": ["boston"], "to": ["tacoma"]}),
]
FIELDS = ("from", "to")


def small_model(records=TOY, dtype=np.float64, seed=0, **kw):
    cfg = PointerConfig(FIELDS, embed_dim=4, encoder_hidden=5, decoder_hidden=6, attn_dim=3, **kw)
    return PointerModel(cfg, build_vocab(records), seed=seed, dtype=dtype)


# --- configuration ---------------------------------------------------------


def test_base_and_restaurant_sizes():
    base = PointerConfig(("a",))
    assert (base.emb, base.enc, base.dec, base.attn) == (96, 128, 128, 128)
    assert not base.use_summarizer and base.embedding_dropout == 0.0
    r = PointerConfig.restaurant(("a",))
    assert (r.emb, r.enc, r.dec, r.attn) == (192, 256, 256, 256)
    assert r.use_summarizer and r.embedding_dropout > 0 and r.recurrent_dropout > 0
    assert PointerConfig.from_dict(r.to_dict()) == r


@pytest.mark.parametrize("kw", [{"fields": ()}, {"fields": ("a", "a")}, {"embedding_dropout": 1.0},
                                {"attn_dim": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        PointerConfig(**{"fields": ("a",), **kw})


def test_decode_limit_default():
    assert PointerConfig(("a",)).decode_limit(7) == 12
    assert PointerConfig(("a",), max_decode_len=3).decode_limit(7) == 3


def _expected_sizes(cfg: PointerConfig, V: int) -> dict:
    E, H, D, A = cfg.emb, cfg.enc, cfg.dec, cfg.attn
    sizes = {"encoder.embedding": (V, E)}
    for d in ("fwd", "bwd"):
        sizes.update({f"encoder.{d}.W_x": (E, 4 * H), f"encoder.{d}.W_h": (H, 4 * H), f"encoder.{d}.b": (4 * H,)})
    dec_in = E + (D if cfg.use_summarizer else 0)
    for k in cfg.fields:
        p = f"decoder.{k}"
        sizes.update({
            f"{p}.embedding": (V, E), f"{p}.start": (E,),
            f"{p}.lstm.W_x": (dec_in, 4 * D), f"{p}.lstm.W_h": (D, 4 * D), f"{p}.lstm.b": (4 * D,),
            f"{p}.h0": (D,), f"{p}.c0": (D,),
            f"{p}.attention.W_e": (2 * H, A), f"{p}.attention.W_d": (D, A), f"{p}.attention.v": (A,),
        })
        if cfg.use_summarizer:
            sizes.update({f"{p}.summarizer.W_x": (2 * H, 4 * D), f"{p}.summarizer.W_h": (D, 4 * D),
                          f"{p}.summarizer.b": (4 * D,)})
    return sizes


@pytest.mark.parametrize("variant", ["base", "restaurant"])
def test_parameter_audit(variant, tmp_path):
    fields = tuple(f"f{i}" for i in range(10))
    cfg = PointerConfig(fields) if variant == "base" else PointerConfig.restaurant(fields)
    vocab = build_vocab([["w%d" % i for i in range(40)]])
    model = PointerModel(cfg, vocab)
    expect = _expected_sizes(cfg, len(vocab))
    assert {k: t.shape for k, t in model.params.items()} == expect
    save_checkpoint(model, tmp_path / "m.ckpt")
    _, header, arrays = checkpoint.load(tmp_path / "m.ckpt")
    assert {e["name"]: tuple(e["shape"]) for e in header["params"]} == expect
    assert sum(a.size for a in arrays.values()) == sum(int(np.prod(s)) for s in expect.values())


def test_decoders_have_independent_parameters():
    m = small_model()
    a, b = m.decoders["from"], m.decoders["to"]
    assert a.attention.W_e is not b.attention.W_e and a.lstm.W_x is not b.lstm.W_x
    assert not np.allclose(a.attention.W_e.data, b.attention.W_e.data)


# --- batching and distributions --------------------------------------------


def test_batch_types_and_absent_column():
    m = small_model()
    batch = make_batch([TOY[2]], m.vocab, FIELDS, np.float64)
    assert batch.inputs[0] == [",", "boston", "boston", "to", "tacoma", EOS]
    assert sorted(batch.types[0]) == sorted({",", "boston", "to", "tacoma", EOS})
    assert batch.onehot.shape == (1, 6, batch.n_types + 1)
    assert np.all(batch.onehot[0].sum(axis=1) == 1)
    assert np.all(batch.onehot[..., batch.n_types] == 0)
    ids = [m.vocab.index(t) for t in batch.types[0]]
    assert ids == sorted(ids)


def test_repeated_token_gets_summed_attention():
    m = small_model()
    batch = make_batch([TOY[2]], m.vocab, FIELDS, np.float64)
    att = Tensor(np.array([[0.05, 0.3, 0.4, 0.1, 0.1, 0.05]]))
    probs = output_distribution(att, batch).data[0]
    col = {t: i for i, t in enumerate(batch.types[0])}
    assert probs[col["boston"]] == pytest.approx(0.7)
    assert probs[col["tacoma"]] == pytest.approx(0.1)
    assert probs.sum() == pytest.approx(1.0)
    vd = vocabulary_distribution(probs, batch.types[0], m.vocab)
    assert vd[m.vocab.index("boston")] == pytest.approx(0.7)
    assert vd.sum() == pytest.approx(1.0)


def test_distributions_are_normalised_and_confined_to_input():
    m = small_model(dtype=np.float32)
    _, diag = forward_loss(m, TOY)
    batch = diag["batch"]
    for name in FIELDS:
        att = diag["attention"][name]
        np.testing.assert_allclose(att.sum(-1), 1.0, atol=1e-6)
        assert np.all(att[~np.broadcast_to(batch.mask[:, None, :], att.shape)] == 0.0)
        probs = diag["distributions"][name]
        np.testing.assert_allclose(probs.sum(-1), 1.0, atol=1e-6)
        assert np.all(probs[..., batch.n_types] == 0.0)
        for b, types in enumerate(batch.types):
            assert np.all(probs[b, :, len(types):] == 0.0)


def _delta_attention(batch, name, dtype=np.float64):
    tg = batch.targets[name]
    B, M = tg.gold.shape
    N = batch.ids.shape[1]
    att = np.zeros((B, M, N), dtype=dtype)
    for b in range(B):
        for j in range(M):
            if not tg.step_mask[b, j]:
                att[b, j, 0] = 1.0
                continue
            pos = np.flatnonzero(batch.onehot[b, :, tg.gold[b, j]])
            att[b, j, pos[0]] = 1.0
    return Tensor(att, requires_grad=True)


def test_delta_attention_gives_zero_loss():
    m = small_model()
    batch = make_batch(TOY, m.vocab, FIELDS, np.float64)
    for name in FIELDS:
        loss, _ = field_loss(_delta_attention(batch, name), batch, name)
        assert abs(loss.item()) < 1e-8


def test_empty_field_with_attention_on_eos_has_zero_loss():
    m = small_model()
    rec = TOY[1]  # "from" is empty, so its target is just EOS
    batch = make_batch([rec], m.vocab, FIELDS, np.float64)
    assert batch.targets["from"].lengths.tolist() == [1]
    att = np.zeros((1, 1, len(rec.input_tokens)))
    att[0, 0, -1] = 1.0
    loss, _ = field_loss(Tensor(att), batch, "from")
    assert abs(loss.item()) < 1e-8


def test_target_absent_from_input_uses_floor():
    vocab = build_vocab(TOY)
    rec = E2ERecord(["a", "b"], {"f": ["zzz"]})
    batch = make_batch([rec], vocab, ("f",), np.float64)
    att = Tensor(np.full((1, 2, 4), 0.25))
    loss, _ = field_loss(att, batch, "f")
    # step 1: the absent word; step 2: EOS with mass 0.25; averaged over M = 2
    assert loss.item() == pytest.approx((-np.log(CE_FLOOR) - np.log(0.25 + CE_FLOOR)) / 2)


def test_loss_is_nonnegative_and_deterministic():
    m = small_model(dtype=np.float32)
    l1, _ = forward_loss(m, TOY)
    l2, _ = forward_loss(m, TOY)
    assert l1.item() >= 0
    assert l1.data.tobytes() == l2.data.tobytes()


def test_loss_normalises_by_target_length():
    m = small_model()
    _, diag = forward_loss(m, [TOY[1]])
    probs = diag["distributions"]["to"][0]
    batch = diag["batch"]
    gold = batch.targets["to"].gold[0]
    manual = -np.mean(np.log(probs[np.arange(5), gold] + CE_FLOOR))
    assert diag["field_loss"]["to"] == pytest.approx(manual, rel=1e-10)


def test_batched_loss_is_mean_of_single_losses():
    m = small_model()
    whole = forward_loss(m, TOY)[0].item()
    singles = [forward_loss(m, [r])[0].item() for r in TOY]
    assert whole == pytest.approx(np.mean(singles), rel=1e-10)


def test_batched_gradient_matches_single_gradients():
    m = small_model()

    def grads(recs):
        m.params.zero_grad()
        with Tape() as tape:
            loss = forward_loss(m, recs)[0]
        tape.backward(loss)
        g = {k: t.grad.copy() for k, t in m.params.items() if t.grad is not None}
        m.params.zero_grad()
        return g

    whole = grads(TOY)
    singles = [grads([r]) for r in TOY]
    for k, g in whole.items():
        avg = sum(s.get(k, 0) for s in singles) / len(TOY)
        np.testing.assert_allclose(g, avg, atol=1e-10)


@pytest.mark.parametrize("summarizer", [False, True])
def test_gradient_matches_finite_differences(summarizer):
    rec = E2ERecord(["fly", "to", "boston"], {"dest": ["boston"], "verb": ["fly"]})
    cfg = PointerConfig(("dest", "verb"), embed_dim=3, encoder_hidden=3, decoder_hidden=3, attn_dim=3,
                        use_summarizer=summarizer)
    model = PointerModel(cfg, build_vocab([rec]), seed=7, dtype=np.float64)
    for t in model.params.values():  # move off the zero/one initial values
        t.data += np.random.default_rng(1).normal(scale=0.1, size=t.shape)
    res = check_gradients(model.params, lambda: forward_loss(model, [rec])[0])
    assert res.max_rel_error < 1e-3, res
    assert res.n_checked == model.params.size()


def test_gradcheck_requires_float64():
    with pytest.raises(TypeError):
        check_gradients(small_model(dtype=np.float32).params, lambda: None)


def test_dropout_only_in_training():
    m = small_model(dtype=np.float64, embedding_dropout=0.5, recurrent_dropout=0.5)
    plain = forward_loss(m, TOY)[0].item()
    assert forward_loss(m, TOY, training=True)[0].item() == plain  # no rng, no dropout
    assert forward_loss(m, TOY, training=False, rng=np.random.default_rng(0))[0].item() == plain
    noisy = forward_loss(m, TOY, training=True, rng=np.random.default_rng(0))[0].item()
    assert noisy != plain
    again = forward_loss(m, TOY, training=True, rng=np.random.default_rng(0))[0].item()
    assert again == noisy


# --- decoding --------------------------------------------------------------


def test_untrained_decode_terminates_with_input_words():
    m = small_model(dtype=np.float32)
    preds, traces = decode(m, TOY, return_attention=True)
    for rec, pred in zip(TOY, preds):
        assert set(pred) == set(FIELDS)
        for name, toks in pred.items():
            assert len(toks) <= m.config.decode_limit(len(rec.input_tokens))
            assert EOS not in toks
            assert set(toks) <= set(rec.input_tokens)
    assert all(len(t) >= 1 for t in traces.values())


def test_decode_respects_max_decode_len():
    m = small_model(max_decode_len=2)
    for pred in decode(m, TOY):
        assert all(len(v) <= 2 for v in pred.values())


def test_decode_empty_input_list():
    assert decode(small_model(), []) == []


def test_decode_accepts_token_lists_and_matches_batch_one():
    m = small_model(dtype=np.float32)
    batch = decode(m, [r.tokens for r in TOY])
    single = [decode(m, [r])[0] for r in TOY]
    assert batch == single


def test_decode_ties_go_to_lowest_vocab_index():
    m = small_model(max_decode_len=1)
    for d in m.decoders.values():
        d.attention.v.data[:] = 0.0  # uniform attention
    rec = E2ERecord(["denver", "boston"], {})
    pred = decode(m, [rec])[0]
    candidates = prepare_input(rec.tokens)
    best = min(candidates, key=lambda t: m.vocab.index(t))
    expect = [] if best == EOS else [best]
    assert pred == {f: expect for f in FIELDS}


def test_decode_matches_teacher_forced_argmax():
    m = small_model(dtype=np.float64)
    rec = E2ERecord(TOY[0].tokens, {})
    pred = decode(m, [rec])[0]
    forced = E2ERecord(rec.tokens, pred)
    _, diag = forward_loss(m, [forced])
    batch = diag["batch"]
    for name in FIELDS:
        steps = diag["distributions"][name][0, :, :batch.n_types].argmax(-1)
        emitted = [batch.types[0][i] for i in steps]
        n = len(pred[name])
        assert emitted[:n] == pred[name]
        if n < m.config.decode_limit(len(rec.input_tokens)):
            assert emitted[n] == EOS


def test_overfit_single_record():
    rec = TOY[1]
    cfg = PointerConfig(FIELDS, embed_dim=16, encoder_hidden=16, decoder_hidden=16, attn_dim=16)
    m = PointerModel(cfg, build_vocab([rec]), seed=3)
    state = AdamState(lr=0.01)
    for _ in range(300):
        with Tape() as tape:
            loss = forward_loss(m, [rec])[0]
        tape.backward(loss)
        adam_step(m.params, state)
        if decode(m, [rec])[0] == rec.fields:
            break
    assert decode(m, [rec])[0] == rec.fields


# --- checkpoints -----------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    m = small_model(dtype=np.float32)
    p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(m, p1)
    loaded = load_checkpoint(p1)
    save_checkpoint(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert loaded.config == m.config and loaded.vocab == m.vocab
    for k, t in m.params.items():
        assert loaded.params[k].data.tobytes() == t.data.tobytes()
    assert decode(loaded, TOY) == decode(m, TOY)


def test_checkpoint_errors(tmp_path):
    m = small_model(dtype=np.float32)
    p = tmp_path / "m.ckpt"
    save_checkpoint(m, p)
    blob = p.read_bytes()
    for cut in (4, 30, len(blob) - 1):
        (tmp_path / "t.ckpt").write_bytes(blob[:cut])
        with pytest.raises(checkpoint.CheckpointError, match="truncated"):
            load_checkpoint(tmp_path / "t.ckpt")
    (tmp_path / "x.ckpt").write_bytes(blob + b"\0")
    with pytest.raises(checkpoint.CheckpointError, match="trailing"):
        load_checkpoint(tmp_path / "x.ckpt")
    bumped = blob[:8] + (2).to_bytes(4, "little") + blob[12:]
    (tmp_path / "v.ckpt").write_bytes(bumped)
    with pytest.raises(checkpoint.CheckpointError, match="version"):
        load_checkpoint(tmp_path / "v.ckpt")
    (tmp_path / "g.ckpt").write_bytes(b"NOTACKPT" + blob[8:])
    with pytest.raises(checkpoint.CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "g.ckpt")


def test_checkpoint_kind_is_checked(tmp_path):
    m = small_model(dtype=np.float32)
    checkpoint.save(tmp_path / "k.ckpt", "baseline", m.config.to_dict(), m.vocab.to_list(), m.params)
    with pytest.raises(checkpoint.CheckpointError, match="pointer"):
        load_checkpoint(tmp_path / "k.ckpt")
