import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from teamoc import belief  # noqa: E402


@pytest.fixture(autouse=True)
def belief_normalization_holds():
    """Every belief built during a test must sum to one within 1e-12."""
    yield
    assert belief.AUDIT["max_deviation"] <= 1e-12, belief.AUDIT


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
