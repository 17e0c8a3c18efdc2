import numpy as np
import pytest

from e2eie.tensor import Tape, Tensor

_ACCEPTANCE: list[tuple[str, str, str]] = []


def record_acceptance(criterion: str, status: str, detail: str = "") -> None:
    _ACCEPTANCE.append((criterion, status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, status, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{status:<4} {crit}: {detail}")


def numeric_grad(f, arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    g = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = float(f())
        flat[i] = orig - step
        down = float(f())
        flat[i] = orig
        gf[i] = (up - down) / (2 * step)
    return g


def analytic_grad(build, *tensors):
    for t in tensors:
        t.zero_grad()
    with Tape() as tape:
        out = build()
    tape.backward(out)
    return [t.grad.copy() for t in tensors]


def max_rel_err(a, n, floor=1e-6):
    a, n = np.asarray(a, dtype=np.float64), np.asarray(n, dtype=np.float64)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)))


def gradcheck_tensors(build, *tensors, floor=1e-6):
    """Max relative error between backprop and central differences over all inputs."""
    grads = analytic_grad(build, *tensors)
    worst = 0.0
    for t, g in zip(tensors, grads):
        num = numeric_grad(lambda: build().item(), t.data)
        worst = max(worst, max_rel_err(g, num, floor))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def param(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)
