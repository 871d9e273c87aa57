import numpy as np
import pytest

from modelhop.scorer import Dataset, Hyperparams, standardize

_ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report():
    """Record one PASS/FAIL line per criterion and assert it."""

    def _report(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'} {name}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return _report


def random_dataset(n, p, seed=0, n_true=2):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:n_true] = rng.choice([-1.0, 1.0], n_true) * rng.uniform(0.5, 1.5, n_true)
    y = X @ beta + rng.standard_normal(n)
    return standardize(X, y)


def unit_info(data: Dataset) -> Hyperparams:
    u = min(10.0, data.p / 2)
    return Hyperparams(float(data.n), u, data.p - u)


@pytest.fixture
def small_data():
    return random_dataset(30, 5, seed=3)
