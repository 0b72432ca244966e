import numpy as np
import pytest
from hypothesis import strategies as st

from pathhjb.paths import Path

H = 0.1
FLOATS = st.integers(-320, 320).map(lambda k: k / 64)


@st.composite
def paths(draw, n=None, dim=None, h=H):
    n = draw(st.integers(1, 12)) if n is None else n
    dim = draw(st.integers(1, 3)) if dim is None else dim
    vals = draw(st.lists(FLOATS, min_size=n * dim, max_size=n * dim))
    return Path(np.reshape(vals, (n, dim)), h)


@st.composite
def path_triples(draw):
    dim = draw(st.integers(1, 2))
    return tuple(draw(paths(dim=dim)) for _ in range(3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.LINES:
            terminalreporter.write_line(line)
