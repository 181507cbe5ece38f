import numpy as np
import pytest
from hypothesis import settings

from mlspec.model import LayerStack

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_stack(rng: np.random.Generator, n: int, m: int, p: float = 0.3) -> LayerStack:
    upper = np.triu(rng.random((m, n, n)) < p).astype(np.uint8)
    return LayerStack(upper | upper.transpose(0, 2, 1))


def random_symmetric(rng: np.random.Generator, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n))
    return (a + a.T) / 2


def random_orthonormal(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((n, d)))
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
