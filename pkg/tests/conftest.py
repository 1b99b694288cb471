import numpy as np
import pytest

from rcot import autodiff as ad


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def central_diff(f, arr, eps=1e-5, order=2):
    """Central finite differences of scalar ``f()`` w.r.t. every entry of ``arr`` (in place).

    ``order=4`` uses the five-point stencil, whose truncation error is
    O(eps^4) instead of O(eps^2).
    """
    grad = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]

        def at(delta):
            arr[idx] = old + delta
            return f()

        if order == 4:
            grad[idx] = (8 * (at(eps) - at(-eps)) - (at(2 * eps) - at(-2 * eps))) / (12 * eps)
        else:
            grad[idx] = (at(eps) - at(-eps)) / (2 * eps)
        arr[idx] = old
    return grad


def assert_grad_close(analytic, numeric, rel=1e-4, floor=1e-8):
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    # entries where both sides sit below the floor count as agreeing
    bad = (err > rel * scale) & (err > floor)
    assert not bad.any(), f"max rel err {np.max(err / scale):.3e} at {np.argwhere(bad)[:3].tolist()}"


def scalar_value(fn):
    """Evaluate ``fn()`` without recording a graph and return a float."""
    with ad.no_grad():
        return float(ad.value_of(fn()))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
