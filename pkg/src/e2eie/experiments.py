"""Full benchmark runs: pointer model vs. baseline tagger on one dataset.

Expects ``<data_dir>/<dataset>/train.bio`` and ``test.bio`` for dataset in
``atis``, ``movie`` and ``restaurant``. The restaurant run uses the larger
pointer variant (doubled widths, dropout, summarizers).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .corpus import BioSentence, FieldSchema, read_bio, select_schema, to_e2e
from .evaluation import EvalReport, SignificanceResult, bootstrap_significance, chunk_f1, muc5_score
from .tasks import baseline_predictions, predict_records, tag_sentences, train_pointer, train_tagger
from .training import LogRow, TrainConfig

DATA_ENV = "E2EIE_DATA_DIR"


def data_dir_from_env() -> Optional[Path]:
    v = os.environ.get(DATA_ENV)
    return Path(v) if v else None


def has_dataset(data_dir: Optional[Path], dataset: str) -> bool:
    return data_dir is not None and all((data_dir / dataset / f"{s}.bio").is_file() for s in ("train", "test"))


def load_split(data_dir: Path, dataset: str) -> tuple[list[BioSentence], list[BioSentence]]:
    return read_bio(data_dir / dataset / "train.bio"), read_bio(data_dir / dataset / "test.bio")


@dataclass
class ExperimentResult:
    dataset: str
    seed: int
    schema: FieldSchema
    pointer: EvalReport
    baseline: EvalReport
    baseline_chunk_f1: float
    significance: SignificanceResult  # A = pointer, B = baseline
    pointer_log: list[LogRow]
    baseline_log: list[LogRow]

    def summary(self) -> str:
        s = self.significance
        return (f"{self.dataset} seed {self.seed}: pointer F1 {self.pointer.f1:.4f}, baseline F1 "
                f"{self.baseline.f1:.4f}, baseline chunk F1 {self.baseline_chunk_f1:.4f}, "
                f"better {'pointer' if s.better == 'A' else 'baseline'} p={s.p:.4f}")


def run_experiment(data_dir: Path, dataset: str, seed: int = 42, config: Optional[TrainConfig] = None,
                   resamples: int = 10_000, skip_baseline: bool = False) -> ExperimentResult:
    train_s, test_s = load_split(data_dir, dataset)
    schema = select_schema(train_s, dataset)
    variant = "restaurant" if dataset == "restaurant" else "base"
    cfg = replace(config or TrainConfig(), seed=seed, dataset=dataset, variant=variant)

    train_r, test_r = to_e2e(train_s, schema), to_e2e(test_s, schema)
    gold = [r.fields for r in test_r]
    pmodel, pres = train_pointer(train_r, schema, replace(cfg, model="pointer"))
    p_preds = predict_records(pmodel, [r.tokens for r in test_r])
    p_report = muc5_score(p_preds, gold, schema.fields)

    if skip_baseline:
        b_preds, b_chunk, b_log = [{f: [] for f in schema.fields} for _ in test_r], 0.0, []
    else:
        bmodel, bres = train_tagger(train_s, replace(cfg, model="baseline"))
        tokens = [s.tokens for s in test_s]
        b_preds = baseline_predictions(bmodel, tokens, schema)
        b_chunk = chunk_f1(tag_sentences(bmodel, tokens), [s.labels for s in test_s])[2]
        b_log = bres.log
    b_report = muc5_score(b_preds, gold, schema.fields)
    sig = bootstrap_significance(p_preds, b_preds, gold, resamples=resamples, seed=seed, fields=schema.fields)
    return ExperimentResult(dataset, seed, schema, p_report, b_report, b_chunk, sig, pres.log, b_log)


def converged_by(log: list[LogRow], update: int, within: float = 0.01) -> bool:
    """True if some evaluation at or before ``update`` came within ``within`` of the run's best."""
    upto = [r.val_metric for r in log if r.update <= update]
    return bool(upto) and max(upto) >= max(r.val_metric for r in log) - within
