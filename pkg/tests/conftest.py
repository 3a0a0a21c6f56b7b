import time
import warnings

import pytest

from bdgsharp.critical import (SearchConfig, ScanResolutionWarning, bounded_solution,
                               find_critical, find_regime_interval)
from bdgsharp.extension import ExtendedValue, hedge_table

ACCEPTANCE = {}


def record(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def critical_run():
    t = time.time()
    res = find_critical(1.0)
    return res, time.time() - t


@pytest.fixture(scope="session")
def critical_interval(critical_run):
    res, _ = critical_run
    C = res.c_bracket[1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScanResolutionWarning)
        iv = find_regime_interval(C, 1.0, (0.85, 0.95))
    return C, iv


@pytest.fixture(scope="session")
def critical_grid(critical_interval):
    C, iv = critical_interval
    return bounded_solution(C, "lower", 1.0, SearchConfig(), interval=iv)


@pytest.fixture(scope="session")
def critical_ev(critical_grid):
    return ExtendedValue(critical_grid)


@pytest.fixture(scope="session")
def critical_table(critical_ev):
    return hedge_table(critical_ev)
