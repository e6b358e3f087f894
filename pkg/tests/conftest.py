from __future__ import annotations

import numpy as np
import pytest

from instances import CASE1_SPLIT, CASE2_SPLIT, REF_A, REF_B
from lsqswarm.partitioning import make_case1, make_case2, make_homogeneous
from lsqswarm.topology import standard_double_layer, standard_grid

_CRITERIA: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture(scope="session")
def criterion_report():
    """Record one pass/fail line per acceptance criterion (AND-ed across calls)."""

    def report(number: int, name: str, ok: bool, detail: str = "") -> None:
        prev = _CRITERIA.get(number)
        if prev is not None:
            ok = ok and prev[1]
            detail = f"{prev[2]}; {detail}" if detail else prev[2]
        _CRITERIA[number] = (name, bool(ok), detail)
        print(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}")

    return report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number}: {name} ({detail})")


@pytest.fixture
def ref_system():
    return REF_A.copy(), REF_B.copy()


@pytest.fixture
def reference_systems():
    """(partition, network) for the three variants on the 4 x 3 inconsistent system."""
    A, b = REF_A, REF_B
    c1 = make_case1(A, b, **CASE1_SPLIT)
    c2 = make_case2(A, b, **CASE2_SPLIT)
    return {
        "hom": (make_homogeneous(A, b), standard_grid(4, 3)),
        "case1": (c1, standard_double_layer(c1.cluster_sizes)),
        "case2": (c2, standard_double_layer(c2.cluster_sizes)),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
