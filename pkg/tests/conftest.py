import numpy as np
import pytest

from symcodec.symmetry import SymmetryKind


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ALL_KINDS = list(SymmetryKind)
EVEN_KINDS = [k for k in SymmetryKind if not k.is_skew]


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
