import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from dislocate import geometry  # noqa: E402

ACCEPTANCE_LINES: list = []


@pytest.fixture(scope="session")
def disk():
    return geometry.make_unit_disk()


@pytest.fixture(scope="session")
def ellipse():
    s, x, y = geometry.ellipse_samples(1.2, 0.8, 2048)
    return geometry.domain_from_samples(s, x, y)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
