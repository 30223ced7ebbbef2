from functools import lru_cache

import numpy as np
import pytest

from stokes_vem.mesh import generate

# regular hexagon of unit circumradius
HEXAGON = np.array([[np.cos(a), np.sin(a)] for a in np.linspace(0, 2 * np.pi, 7)[:-1]])
# L-shaped hexagon; its kernel is the unit square
L_SHAPE = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], dtype=float)
TRIANGLE = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
UNIT_SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
# one M3-like dented octagon
OCTAGON = np.array([[0, 0], [0.5, 0.2], [1, 0], [1.2, 0.5], [1, 1], [0.5, 1.2], [0, 1],
                    [0.2, 0.5]], dtype=float)


@lru_cache(maxsize=None)
def cached_mesh(family, level, seed=0):
    return generate(family, level, seed)


_CRITERIA = {}


@pytest.fixture(scope="session")
def criterion_report():
    """``record(number, passed, detail)``; lines are printed in the terminal summary."""
    def record(number, passed, detail):
        _CRITERIA[number] = (passed, detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
