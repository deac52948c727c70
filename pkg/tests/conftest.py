import sys
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from toric_solitons import balance as bl  # noqa: E402
from toric_solitons import metric as mt  # noqa: E402
from toric_solitons import polytope as pt  # noqa: E402

ACCEPTANCE_LINES: list[str] = []

CATALOG_NAMES = ["P1", "P1xP1", "P2", "dP6", "Bl1P2"]


@lru_cache(maxsize=None)
def polytope(name):
    return pt.get(name)


@lru_cache(maxsize=None)
def balanced(name, k):
    """Shared across test modules: each (P, k) fixed point is computed once per session."""
    return bl.balanced_metric(polytope(name), k)


@lru_cache(maxsize=None)
def fubini_study():
    """phi_FS on P^1: log(e^-t + 2 + e^t) = 2 log(2 cosh(t/2))."""
    return mt.TorusMetric.from_coefficients(polytope("P1"), 1, [1.0, 2.0, 1.0])


@pytest.fixture(params=CATALOG_NAMES)
def catalog_polytope(request):
    return polytope(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
