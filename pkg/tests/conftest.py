import numpy as np
import pytest

from fednest import RngStream

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def _report(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number} {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)


def random_start(seed, d1, d2):
    s = RngStream(seed, ("init",))
    return s.child("x").normal(d1), s.child("y").normal(d2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
