"""Adam, gradient clipping and a validation-driven early-stopping loop."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np

from .layers import ParameterStore
from .tensor import Tape, Tensor

log = logging.getLogger(__name__)

CONFIG_FORMAT = "e2eie-train-config"
CONFIG_VERSION = 1
LOG_HEADER = "update\tloss\tval_metric\twall_time"

# Sub-streams fanned out from the single user seed. Stream i is seeded with
# SeedSequence([seed, i]).
SEED_STREAMS = ("init", "split", "batches")


def derive_seed(seed: int, stream: str) -> int:
    return int(np.random.SeedSequence([seed, SEED_STREAMS.index(stream)]).generate_state(1)[0])


class NonFiniteError(FloatingPointError):
    """A NaN/Inf gradient or loss; ``name`` identifies the parameter if any."""

    def __init__(self, message: str, name: str | None = None):
        self.name = name
        super().__init__(message)


class ConfigError(ValueError):
    pass


# --- optimizer -------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParameterStore, state: AdamState) -> None:
    """One bias-corrected Adam update in place, then zero the gradients.

    Parameters without a gradient are updated as if it were zero. Checks all
    gradients before touching any parameter.
    """
    for name, p in params.items():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"non-finite gradient in parameter {name!r}", name)
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data -= (state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)).astype(p.data.dtype)
        p.zero_grad()


def grad_norm(params: ParameterStore) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(np.square(p.grad, dtype=np.float64)))
    return math.sqrt(total)


def clip_grad_norm(params: ParameterStore, max_norm: float) -> float:
    """Rescale all gradients so their global L2 norm is at most ``max_norm``."""
    norm = grad_norm(params)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


# --- configuration ---------------------------------------------------------


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    max_updates: int = 20_000
    eval_every: int = 250
    patience: int = 8
    validation_fraction: float = 0.1
    seed: int = 42
    clip_norm: float = 5.0
    # stop as soon as the validation metric reaches this value
    target_metric: Optional[float] = None
    model: str = "pointer"
    dataset: str = "atis"
    variant: str = "base"
    train_path: Optional[str] = None
    validation_path: Optional[str] = None
    schema_path: Optional[str] = None

    def validate(self) -> None:
        problems = []
        if not 0.0 < self.validation_fraction < 1.0:
            problems.append("validation_fraction: must be in (0, 1)")
        if self.patience < 1:
            problems.append("patience: must be >= 1")
        for name in ("batch_size", "max_updates", "eval_every"):
            if getattr(self, name) < 1:
                problems.append(f"{name}: must be >= 1")
        if self.lr <= 0:
            problems.append("lr: must be > 0")
        if self.model not in ("pointer", "baseline"):
            problems.append("model: must be 'pointer' or 'baseline'")
        if self.variant not in ("base", "restaurant"):
            problems.append("variant: must be 'base' or 'restaurant'")
        if problems:
            raise ConfigError("invalid training config: " + "; ".join(problems))

    def adam(self) -> AdamState:
        return AdamState(self.lr, self.beta1, self.beta2, self.eps)

    def to_dict(self) -> dict:
        return {"format": CONFIG_FORMAT, "version": CONFIG_VERSION, **asdict(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        fmt, version = d.pop("format", CONFIG_FORMAT), d.pop("version", CONFIG_VERSION)
        if fmt != CONFIG_FORMAT or version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config {fmt!r} version {version}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainConfig":
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        return cls.from_dict(d)


def split_train_validation(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint index arrays (train, validation) from a seeded permutation."""
    if not 0.0 < fraction < 1.0:
        raise ConfigError("validation_fraction: must be in (0, 1)")
    if n < 2:
        raise ValueError("need at least two items to split off a validation set")
    perm = np.random.default_rng(seed).permutation(n)
    n_val = min(max(1, int(round(n * fraction))), n - 1)
    val, train = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    assert not set(val.tolist()) & set(train.tolist())
    return train, val


# --- loop ------------------------------------------------------------------


class Task(Protocol):
    params: ParameterStore

    def loss(self, items: Sequence, rng: np.random.Generator) -> Tensor: ...

    def evaluate(self, items: Sequence) -> float: ...

    def save(self, path) -> None: ...


@dataclass
class LogRow:
    update: int
    loss: float
    val_metric: float
    wall_time: float

    def line(self) -> str:
        return f"{self.update}\t{self.loss:.6f}\t{self.val_metric:.6f}\t{self.wall_time:.3f}"


@dataclass
class TrainResult:
    best_metric: float
    best_update: int
    updates: int
    log: list[LogRow]
    best_params: dict[str, np.ndarray]
    stopped_early: bool
    train_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    val_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


class TrainingAborted(RuntimeError):
    """Raised on a non-finite loss; ``result`` holds the best state so far."""

    def __init__(self, message: str, result: TrainResult):
        self.result = result
        super().__init__(message)


def train(task: Task, items: Sequence, config: TrainConfig, val_items: Optional[Sequence] = None,
          log_path=None, checkpoint_path=None,
          on_eval: Optional[Callable[[LogRow], None]] = None) -> TrainResult:
    """Train ``task`` with Adam and early stopping on a validation metric.

    Without ``val_items`` a ``validation_fraction`` share of ``items`` is
    held out by index. The validation metric is computed every
    ``eval_every`` updates and after the last update; training stops once
    ``patience`` evaluations in a row fail to beat the best metric, or when
    ``target_metric`` is reached. On return the task's parameters hold the
    best evaluated state, which is also written to ``checkpoint_path``.
    """
    config.validate()
    if val_items is None:
        tr_idx, va_idx = split_train_validation(len(items), config.validation_fraction,
                                                derive_seed(config.seed, "split"))
        train_items = [items[i] for i in tr_idx]
        val_items = [items[i] for i in va_idx]
    else:
        tr_idx, va_idx = np.arange(len(items)), np.zeros(0, dtype=int)
        train_items = list(items)
    if not train_items:
        raise ValueError("no training items")

    rng = np.random.default_rng(derive_seed(config.seed, "batches"))
    adam = config.adam()
    params = task.params
    log_fh = None
    if log_path is not None:
        new = not Path(log_path).exists() or Path(log_path).stat().st_size == 0
        log_fh = open(log_path, "a", encoding="utf-8")
        if new:
            log_fh.write(LOG_HEADER + "\n")

    rows: list[LogRow] = []
    best_metric, best_update = -math.inf, 0
    best_params = params.snapshot()
    bad_evals = 0
    order: list[int] = []
    loss_sum, loss_n = 0.0, 0
    t0 = time.perf_counter()
    stopped_early = False
    update = 0

    def result() -> TrainResult:
        return TrainResult(best_metric, best_update, update, rows, best_params, stopped_early, tr_idx, va_idx)

    try:
        for update in range(1, config.max_updates + 1):
            if len(order) < config.batch_size:
                order.extend(rng.permutation(len(train_items)).tolist())
            batch = [train_items[i] for i in order[:config.batch_size]]
            del order[:config.batch_size]

            params.zero_grad()
            with Tape() as tape:
                loss = task.loss(batch, rng)
            value = loss.item()
            if not math.isfinite(value):
                params.restore(best_params)
                raise TrainingAborted(f"non-finite loss {value} at update {update}", result())
            tape.backward(loss)
            clip_grad_norm(params, config.clip_norm)
            adam_step(params, adam)
            loss_sum += value
            loss_n += 1

            if update % config.eval_every == 0 or update == config.max_updates:
                metric = float(task.evaluate(val_items))
                row = LogRow(update, loss_sum / max(loss_n, 1), metric, time.perf_counter() - t0)
                loss_sum, loss_n = 0.0, 0
                rows.append(row)
                if log_fh is not None:
                    log_fh.write(row.line() + "\n")
                    log_fh.flush()
                if on_eval is not None:
                    on_eval(row)
                log.info("update %d loss %.4f val %.4f", row.update, row.loss, row.val_metric)
                if metric > best_metric:
                    best_metric, best_update = metric, update
                    best_params = params.snapshot()
                    bad_evals = 0
                    if checkpoint_path is not None:
                        task.save(checkpoint_path)
                else:
                    bad_evals += 1
                if config.target_metric is not None and metric >= config.target_metric:
                    stopped_early = True
                    break
                if bad_evals >= config.patience:
                    stopped_early = True
                    break
    finally:
        if log_fh is not None:
            log_fh.close()

    params.restore(best_params)
    return result()
