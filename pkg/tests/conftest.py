import itertools
import math

import numpy as np
import pytest
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from specq.qpoints import QPoint
from specq.specpoints import SpecPoint

# Rounded so that distinct atoms have distances well above underflow.
FINITE = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False, allow_infinity=False).map(lambda x: round(x, 8))


@st.composite
def qpoints(draw, Q=None, n=None):
    Q = draw(st.integers(1, 4)) if Q is None else Q
    n = draw(st.integers(1, 3)) if n is None else n
    return QPoint(draw(hnp.arrays(float, (Q, n), elements=FINITE)))


@st.composite
def qpoint_tuples(draw, k=2, max_Q=4, max_n=3):
    Q = draw(st.integers(1, max_Q))
    n = draw(st.integers(1, max_n))
    return tuple(draw(qpoints(Q, n)) for _ in range(k))


@st.composite
def specpoints(draw, Q=None, n=None):
    S = draw(qpoints(Q, n))
    return SpecPoint(S, draw(st.sampled_from([1, -1])))


@st.composite
def specpoint_tuples(draw, k=2, max_Q=4, max_n=3):
    Q = draw(st.integers(1, max_Q))
    n = draw(st.integers(1, max_n))
    return tuple(draw(specpoints(Q, n)) for _ in range(k))


def matching_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Independent oracle: minimum over all permutations, written out directly."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    best = math.inf
    for perm in itertools.permutations(range(len(A))):
        best = min(best, sum(float(np.sum((A[i] - B[j]) ** 2)) for i, j in enumerate(perm)))
    return math.sqrt(best)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Lines recorded by the acceptance tests, repeated in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
