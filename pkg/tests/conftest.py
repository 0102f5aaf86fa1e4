import os
from pathlib import Path

import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def data_dir():
    root = os.environ.get("SCT_DATA_DIR")
    if not root or not Path(root).exists():
        pytest.skip("published measurement files not available (set SCT_DATA_DIR)")
    return Path(root)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
