import numpy as np
import pytest

from aml.data import Dataset
from aml.estimand import BalanceProblem, Block


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_problem(rng, n, sizes, binary_rows=False):
    """Balance problem with Gaussian designs and targets; optional zeroed rows."""
    blocks = []
    mask = rng.random(n) < 0.6 if binary_rows else np.ones(n, bool)
    for b, p in enumerate(sizes):
        G = rng.normal(size=(n, p)) * mask[:, None]
        blocks.append(Block(f"b{b}", G, rng.normal(size=p)))
    return BalanceProblem(tuple(blocks))


def toy_dataset(rng, n=200, d=2, binary=True):
    X = rng.normal(size=(n, d))
    W = (rng.random(n) < 0.5).astype(float) if binary else rng.normal(size=n)
    Y = X[:, 0] + W + rng.normal(size=n)
    return Dataset(X, W, Y)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "_RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results):
            terminalreporter.write_line(results[key])
