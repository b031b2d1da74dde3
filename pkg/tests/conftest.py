import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evsiting.synthetic import toy_scenario  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def toy():
    return toy_scenario()


@pytest.fixture(scope="session")
def toy_json():
    return Path(__file__).resolve().parents[1] / "src" / "evsiting" / "data" / "toy.json"


@pytest.fixture
def report():
    """Record one acceptance line; it is echoed in the terminal summary."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
