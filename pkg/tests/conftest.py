import numpy as np
import pytest

_ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """Record one pass/fail summary line for an acceptance criterion."""
    return _ACCEPTANCE_LINES.append


def to_float64(tensors):
    """Promote tensors in place; finite differences need 64-bit forwards."""
    for t in tensors:
        t.data = t.data.astype(np.float64)


def max_grad_error(loss_fn, tensors, h=1e-4, sample=None, rng=None):
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn`` rebuilds the graph from the given tensors and returns the
    scalar loss tensor.  With ``sample`` set, only that many coordinates per
    tensor are probed (chosen by ``rng``); otherwise every coordinate is.
    The relative error uses a 1e-3 floor so near-zero gradient pairs compare
    absolutely, well above the ~1e-8 noise floor of float64 differences.
    """
    loss = loss_fn()
    for t in tensors:
        t.grad = None
    loss.backward()

    worst = 0.0
    for t in tensors:
        analytic = np.zeros_like(t.data) if t.grad is None else np.asarray(t.grad, dtype=np.float64)
        flat = t.data.reshape(-1)
        flat_grad = analytic.reshape(-1)
        if sample is None or flat.size <= sample:
            coords = range(flat.size)
        else:
            coords = rng.choice(flat.size, size=sample, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(loss_fn().data)
            flat[i] = orig - h
            f_minus = float(loss_fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = abs(numeric - flat_grad[i]) / max(abs(numeric), abs(flat_grad[i]), 1e-3)
            worst = max(worst, err)
    return worst


@pytest.fixture
def gradcheck():
    def check(loss_fn, tensors, h=1e-4, tol=1e-4, sample=None, rng=None):
        err = max_grad_error(loss_fn, tensors, h=h, sample=sample, rng=rng)
        assert err < tol, f"gradient mismatch: worst relative error {err:.3e} >= {tol}"
        return err

    return check
