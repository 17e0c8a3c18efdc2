"""Central finite-difference gradient checks for parameter stores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .layers import ParameterStore
from .tensor import Tape, Tensor

# Denominator floor for the relative error; keeps exactly-zero and
# vanishingly small gradients from producing meaningless ratios.
REL_FLOOR = 1e-6


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    n_checked: int


def relative_error(analytic: float, numeric: float, floor: float = REL_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def analytic_grads(params: ParameterStore, loss_fn: Callable[[], Tensor]) -> dict[str, np.ndarray]:
    params.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    tape.backward(loss)
    grads = {k: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for k, t in params.items()}
    params.zero_grad()
    return grads


def check_gradients(params: ParameterStore, loss_fn: Callable[[], Tensor], step: float = 1e-5,
                    max_per_param: Optional[int] = None,
                    rng: Optional[np.random.Generator] = None) -> GradCheckResult:
    """Compare backprop gradients with central differences, entry by entry.

    ``loss_fn`` must be deterministic and build its graph from ``params``.
    Use a float64 store; float32 is far too coarse for ``step=1e-5``. With
    ``max_per_param`` only a random subset of each parameter's entries is
    perturbed.
    """
    if params.dtype != np.float64:
        raise TypeError("gradient checks need a float64 parameter store")
    grads = analytic_grads(params, loss_fn)
    worst = (0.0, "", ())
    n = 0
    for name, t in params.items():
        flat = t.data.reshape(-1)
        idxs = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            idxs = (rng or np.random.default_rng(0)).choice(flat.size, max_per_param, replace=False)
        g = grads[name].reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn().item()
            flat[i] = orig - step
            down = loss_fn().item()
            flat[i] = orig
            num = (up - down) / (2 * step)
            err = relative_error(g[i], num)
            n += 1
            if err > worst[0]:
                worst = (err, name, np.unravel_index(i, t.shape))
    return GradCheckResult(worst[0], worst[1], tuple(int(x) for x in worst[2]), n)
