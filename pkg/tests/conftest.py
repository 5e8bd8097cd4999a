import numpy as np
import pytest

from adjointpde.core import Boundary, Grid, ranged_library


@pytest.fixture
def periodic_grid():
    n = 64
    return Grid((n,), (1.0 / n,), (0.0,), Boundary.PERIODIC)


@pytest.fixture
def lib9():
    """d in {1,2,3}, p in {1,2,3} for a scalar 1D field."""
    return ranged_library(1, 1, [1, 2, 3], [1, 2, 3])


def sine_field(grid, k=1):
    x = grid.axis(0)
    return np.sin(2 * np.pi * k * x)[None]


def pytest_terminal_summary(terminalreporter):
    try:
        from tests.test_acceptance import RESULTS
    except ImportError:
        import sys

        mod = sys.modules.get("test_acceptance")
        RESULTS = getattr(mod, "RESULTS", {})
    if not RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(RESULTS):
        r = RESULTS[number]
        tr.write_line(f"criterion {number:2d}: {'PASS' if r['ok'] else 'FAIL'}  {r['title']}")
        for name, good, detail in r["checks"]:
            tr.write_line(f"      {'ok  ' if good else 'FAIL'} {name}: {detail}")
