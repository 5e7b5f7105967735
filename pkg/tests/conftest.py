import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _CRITERIA[num] = (title, f"{status} ({rep.duration:.0f}s)")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, status = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num}: {status:12s} {title}")
