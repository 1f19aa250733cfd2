from __future__ import annotations

import numpy as np
import pytest

from nodefill import constant_spacing, make_box


@pytest.fixture
def unit_square():
    return make_box([0.0, 0.0], [1.0, 1.0])


@pytest.fixture
def unit_cube():
    return make_box([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def h025():
    return constant_spacing(0.025)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results, key=_criterion_order):
            terminalreporter.write_line(results[key])


def _criterion_order(key):
    import re

    m = re.match(r"AC(\d+)(\S*)", key)
    return (int(m.group(1)), m.group(2), key) if m else (99, "", key)
