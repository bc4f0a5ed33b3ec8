import numpy as np
import pytest

from lockbox.core import PRISMATIC, REVOLUTE, DependencyEdge, JointSpec, LockboxSpec

ACCEPTANCE_LINES: list[str] = []


def make_spec(edges, n=None, target=None, kinds=None, initial=None, name="t"):
    """Small lockbox on a line of joints A, B, C, ... spaced 0.1 m apart."""
    ids = sorted({x for e in edges for x in e[:2]} | ({target} if target else set()))
    if n is not None:
        ids = [chr(ord("A") + i) for i in range(n)]
    kinds = kinds or {}
    initial = initial or {}
    joints = tuple(
        JointSpec(j, kinds.get(j, PRISMATIC), (0.1 * i, 0.0, 0.0), initial.get(j, 0)) for i, j in enumerate(ids)
    )
    return LockboxSpec(name, joints, tuple(DependencyEdge(*e) for e in edges), target or ids[-1])


@pytest.fixture
def one_to_one():
    # B moves only while A is in state 1.
    return make_spec([("A", "B", 1)], target="B")


@pytest.fixture
def many_to_one():
    # D needs A=0, B=1, C=1.
    return make_spec([("A", "D", 0), ("B", "D", 1), ("C", "D", 1)], target="D")


@pytest.fixture
def bistable():
    # A=0 frees B and locks C; A=1 the reverse.
    return make_spec([("A", "B", 0), ("A", "C", 1)], target="C", kinds={"A": REVOLUTE})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
