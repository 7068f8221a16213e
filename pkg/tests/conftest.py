import sys

import numpy as np
import pytest

from dopf.centralized import centralized_solve
from dopf.opf import DATA_DIR, build_partitioned_opf, load_case, load_partition
from dopf.opf.init import feasible_init

CASE57 = DATA_DIR / "case57.m"
PARTITION57 = DATA_DIR / "case57_4regions.txt"

# Published MATPOWER runopf objective of case57 ($/h), used only as an
# external plausibility reference for our own centralized solve.
MATPOWER_F57 = 41737.79


@pytest.fixture(scope="session")
def case57():
    return load_case(CASE57)


@pytest.fixture(scope="session")
def spec57():
    return load_partition(PARTITION57)


@pytest.fixture(scope="session")
def opf57(case57, spec57):
    """``(problem, layout)`` of the default 4-region case57 split."""
    return build_partitioned_opf(case57, spec57)


@pytest.fixture(scope="session")
def ref57(opf57):
    problem, layout = opf57
    return centralized_solve(problem, layout.flat_start())


@pytest.fixture(scope="session")
def feasible57(opf57, case57, spec57):
    problem, layout = opf57
    return feasible_init(problem, case57, spec57, layout)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        title, ok, detail = acc.RESULTS[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")
