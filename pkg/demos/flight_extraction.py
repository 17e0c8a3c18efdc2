"""Train the pointer model and the BIO tagger on synthetic flight requests.

Both systems are scored on field values per record, then compared with the
paired bootstrap. Takes about a minute on one CPU core.

    python demos/flight_extraction.py
"""

from e2eie.corpus import FieldSchema, to_e2e
from e2eie.evaluation import bootstrap_significance, muc5_score
from e2eie.synthetic import FIELDS, flight_corpus
from e2eie.tagger import TaggerConfig
from e2eie.tasks import baseline_predictions, predict_records, train_pointer, train_tagger
from e2eie.training import TrainConfig

schema = FieldSchema("atis", FIELDS)
train_bio, test_bio = flight_corpus(300, seed=0), flight_corpus(80, seed=1)
train_rec, test_rec = to_e2e(train_bio, schema), to_e2e(test_bio, schema)

print("one training record:")
print(" ", train_rec[0].to_json())

cfg = TrainConfig(lr=0.005, batch_size=16, max_updates=300, eval_every=50, patience=4)
pointer, plog = train_pointer(train_rec, schema, cfg,
                              on_eval=lambda r: print(f"  pointer update {r.update:4d}  val F1 {r.val_metric:.3f}"))
tagger, tlog = train_tagger(train_bio, cfg, tagger_config=TaggerConfig.from_sentences(train_bio, embed_dim=32, hidden=32),
                            on_eval=lambda r: print(f"  tagger  update {r.update:4d}  val chunk F1 {r.val_metric:.3f}"))

gold = [r.fields for r in test_rec]
p_pred = predict_records(pointer, [r.tokens for r in test_rec])
b_pred = baseline_predictions(tagger, [s.tokens for s in test_bio], schema)

print("\nexample prediction:", " ".join(test_rec[0].tokens))
for f in schema.fields:
    print(f"  {f:14s} pointer={p_pred[0][f]}  tagger={b_pred[0][f]}  gold={gold[0][f]}")

print("\npointer:\n" + muc5_score(p_pred, gold, schema.fields).to_text())
print("\ntagger:\n" + muc5_score(b_pred, gold, schema.fields).to_text())

sig = bootstrap_significance(p_pred, b_pred, gold, resamples=2000, seed=42, fields=schema.fields)
print(f"\nbootstrap: better={'pointer' if sig.better == 'A' else 'tagger'}  p={sig.p:.4f}")
