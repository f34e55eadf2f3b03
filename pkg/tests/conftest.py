import os
from pathlib import Path

import numpy as np
import pytest

# chi tables are symbol independent and expensive; share one cache across the
# whole session (and across sessions) unless the caller already picked one
os.environ.setdefault("W4D_CACHE", str(Path(__file__).resolve().parent.parent / ".w4d-cache"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines collected by tests/test_acceptance.py."""
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
