"""End-to-end information extraction with a multi-decoder pointer network.

Modules
-------
tensor      dense tensors with tape-based reverse-mode autodiff
layers      LSTM, Bi-LSTM, additive attention, embeddings, variational dropout
corpus      BIO reading, chunking, E2E records, schemas, vocabularies
pointer     the pointer network: loss, greedy decoding, checkpoints
tagger      Bi-LSTM + LSTM BIO tagging baseline
evaluation  MUC-5 exact-match scoring, chunk F1, paired bootstrap
training    Adam, clipping, early-stopping training loop, configs
cli         the ``e2eie`` command
"""

from .corpus import BioSentence, E2ERecord, FieldSchema, Vocabulary, build_vocab, read_bio, select_schema, to_e2e
from .evaluation import EvalReport, bootstrap_significance, chunk_f1, muc5_score
from .pointer import PointerConfig, PointerModel, decode, forward_loss
from .tagger import TaggerConfig, TaggerModel, tag, tagger_loss
from .tensor import Tape, Tensor
from .training import AdamState, TrainConfig, adam_step, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BioSentence",
    "E2ERecord",
    "EvalReport",
    "FieldSchema",
    "PointerConfig",
    "PointerModel",
    "TaggerConfig",
    "TaggerModel",
    "Tape",
    "Tensor",
    "TrainConfig",
    "Vocabulary",
    "adam_step",
    "bootstrap_significance",
    "build_vocab",
    "chunk_f1",
    "decode",
    "forward_loss",
    "muc5_score",
    "read_bio",
    "select_schema",
    "tag",
    "tagger_loss",
    "to_e2e",
    "train",
]
