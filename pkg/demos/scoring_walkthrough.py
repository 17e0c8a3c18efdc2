"""How field-level scoring and the paired bootstrap behave on tiny inputs."""

import itertools

import numpy as np

from e2eie.evaluation import bootstrap_from_counts, chunk_f1, count_worse, muc5_score, record_counts

# Each field value list is compared as a multiset of strings.
pred = [{"toloc": ["boston", "denver"], "fromloc": ["dallas"]},
        {"toloc": ["new york"], "fromloc": []}]
gold = [{"toloc": ["boston"], "fromloc": ["dallas"]},
        {"toloc": ["new york", "seattle"], "fromloc": ["tacoma"]}]
print(muc5_score(pred, gold).to_text())

# Token-level chunk scoring for the tagger, conlleval style.
print("\nchunk P/R/F1:", chunk_f1([["B-x", "I-x", "O", "B-y"]], [["B-x", "I-x", "O", "B-x"]]))

# Per-record (tp, spurious, missing) rows drive the bootstrap.
gold5 = [{"f": [str(i)]} for i in range(5)]
a = [{"f": [str(i)]} if i < 4 else {"f": []} for i in range(5)]
b = [{"f": [str(i)]} if i % 2 == 0 else {"f": ["x"]} for i in range(5)]
ca, cb = record_counts(a, gold5), record_counts(b, gold5)
print("\nper-record counts for A:\n", ca)

# With five records every resample can be enumerated, which gives the exact p.
idx = np.array(list(itertools.product(range(5), repeat=5)))
exact = count_worse(ca, cb, idx) / len(idx)
est = bootstrap_from_counts(ca, cb, resamples=20_000, seed=0)
print(f"\nexact p {exact:.4f}  sampled p {est.p:.4f}  better {est.better}")
