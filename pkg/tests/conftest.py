import functools

import numpy as np
import pytest

from ritzlab.mesh import named_polygon, refine_to_level


TOP_LEVEL = 5


@functools.lru_cache(maxsize=None)
def _hierarchy():
    return refine_to_level(named_polygon("square"), TOP_LEVEL)


def square_mesh(level):
    """Levels of one shared nested hierarchy of the unit square."""
    return _hierarchy().mesh_at_level(level)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict[str, str] = {}


def record(criterion: str, ok: bool, detail: str = "") -> None:
    """Store one pass/fail line; printed in the terminal summary."""
    ACCEPTANCE_LINES[criterion] = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f": {detail}" if detail else "")
    print(ACCEPTANCE_LINES[criterion])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
