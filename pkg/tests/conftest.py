import warnings

import numpy as np
import pytest

from shapecond.data import Dataset
from shapecond.toy import gen_toy

warnings.filterwarnings("ignore", category=UserWarning, module="numba")


def make_dataset(X, y, names=None):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[:, None, :]
    y = np.asarray(y)
    names = names or tuple(str(i) for i in range(int(y.max()) + 1))
    return Dataset(X, y, tuple(names))


@pytest.fixture(scope="session")
def toy_small():
    d, truth = gen_toy(classes=2, n=40, length=48, motif_len=12, jitter=2, noise_sigma=0.3, seed=3)
    return d, truth


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# One "PASS/FAIL criterion N: ..." line per acceptance criterion, filled by test_acceptance.py
# and repeated in the terminal summary so it survives output capture.
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
