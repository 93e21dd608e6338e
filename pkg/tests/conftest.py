import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from annealforge.ising import Domain, IsingModel


def random_model(rng, n, p_edge=0.6, linear=True, domain=Domain.SPIN, offset=0.0):
    lin = {i: float(rng.uniform(-1, 1)) for i in range(n)} if linear else {}
    quad = {(i, j): float(rng.uniform(-1, 1))
            for i, j in itertools.combinations(range(n), 2) if rng.random() < p_edge}
    return IsingModel(n, lin, quad, domain, offset)


def all_spins(n):
    """Every +-1 vector of length n, one per row."""
    idx = np.arange(2 ** n)[:, None]
    return (2 * ((idx >> np.arange(n)) & 1) - 1).astype(np.int8)


@st.composite
def models(draw, max_vars=8, domain=Domain.SPIN):
    n = draw(st.integers(1, max_vars))
    coeff = st.floats(-2, 2, allow_nan=False, allow_infinity=False)
    lin = draw(st.dictionaries(st.integers(0, n - 1), coeff, max_size=n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    quad = {}
    if pairs:
        quad = draw(st.dictionaries(st.sampled_from(pairs), coeff, max_size=len(pairs)))
    offset = draw(coeff)
    return IsingModel(n, lin, quad, domain, offset)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
