"""Central differences against reverse mode, for a toy loss and a tiny pointer model."""

import numpy as np

from e2eie.corpus import E2ERecord, build_vocab
from e2eie.gradcheck import check_gradients
from e2eie.layers import ParameterStore
from e2eie.pointer import PointerConfig, PointerModel, forward_loss
from e2eie.tensor import Tensor, log, matmul, softmax, tensor_sum

rng = np.random.default_rng(0)
store = ParameterStore(np.float64)
store.create("W", rng.normal(size=(4, 3)))
x = Tensor(rng.normal(size=(2, 4)))
res = check_gradients(store, lambda: tensor_sum(log(softmax(matmul(x, store["W"])))))
print(f"toy log(softmax): {res.n_checked} entries, max rel error {res.max_rel_error:.2e}")

rec = E2ERecord(["fly", "to", "boston", "or", "denver"], {"toloc": ["boston", "denver"], "airline": []})
for summarizer in (False, True):
    cfg = PointerConfig(("toloc", "airline"), embed_dim=4, encoder_hidden=4, decoder_hidden=4, attn_dim=4,
                        use_summarizer=summarizer)
    model = PointerModel(cfg, build_vocab([rec]), seed=1, dtype=np.float64)
    res = check_gradients(model.params, lambda: forward_loss(model, [rec])[0])
    print(f"pointer (summarizer={summarizer}): {res.n_checked} entries, max rel error {res.max_rel_error:.2e}")
