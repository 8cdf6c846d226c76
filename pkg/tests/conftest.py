import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}
_SETUP_SECONDS = pytest.StashKey[float]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "setup":
        # fixtures such as the shared benchmark count toward the criterion's time
        item.stash[_SETUP_SECONDS] = rep.duration
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        secs = rep.duration + (item.stash.get(_SETUP_SECONDS, 0.0) if rep.when == "call" else 0.0)
        _CRITERIA[number] = (title, "PASS" if rep.passed else "FAIL", secs)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, secs = _CRITERIA[number]
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {title} ({secs:.1f}s)")
