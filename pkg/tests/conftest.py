import numpy as np
import pytest

from ttn_apply.tree import make_structure, random_ttno, random_ttns

# the four small families used by every dense end-to-end check
SMALL_SHAPES = [("chain", 6), ("t-tree", 1), ("balanced-binary", 2), ("ftps", 2)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_instance(family, L, seed=0, d=2, Ds=2, Do=2):
    rng = np.random.default_rng(seed)
    topo = make_structure(family, L, d)
    return random_ttno(topo, Do, rng), random_ttns(topo, Ds, rng)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list = []


def record_criterion(name, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    assert ok, f"{name}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
