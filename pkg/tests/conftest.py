import numpy as np
import pytest

from hiddencascade.model import Network

_CRITERIA = []


def record_criterion(number, title, passed, detail=""):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {title}" + (f" ({detail})" if detail else "")
    _CRITERIA.append(line)
    print(line)


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


def make_network(n, parents, sources, a=2.0, b=1.0, source_times=None):
    A = np.full((n, n), np.nan)
    B = np.full((n, n), np.nan)
    for i, ps in enumerate(parents):
        for j in ps:
            A[i, j] = a(i, j) if callable(a) else a
            B[i, j] = b(i, j) if callable(b) else b
    return Network(n, parents, sources, A, B, source_times=source_times or ())


@pytest.fixture
def chain3():
    """s -> a -> b, plus b may also be infected directly by s."""
    return make_network(3, [(), (0,), (0, 1)], [0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
