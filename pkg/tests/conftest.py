import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dualslvd.encoder import ParityCheck  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def toy_H():
    """v=2, rate-3/4 encoder with a three-step zero-input cycle."""
    return ParityCheck.from_octal("2,5,7,6")


@pytest.fixture(scope="session")
def v3_H():
    """v=3, rate-2/3 encoder."""
    return ParityCheck.from_octal("17,15,13")


@pytest.fixture(scope="session")
def v4_H():
    return ParityCheck.from_octal("33,25,37,31")


@pytest.fixture(scope="session")
def v6_H():
    return ParityCheck.from_octal("107,135,133,141")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
