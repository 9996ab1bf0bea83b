import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"

_ACCEPTANCE: dict[str, list] = {}


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    key, title = marker.args[0], marker.args[1]
    entry = _ACCEPTANCE.setdefault(key, [title, "PASS", ""])
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if rep.skipped:
            if entry[1] == "PASS":
                entry[1] = "SKIP"
                entry[2] = str(rep.longrepr[2]) if isinstance(rep.longrepr, tuple) else ""
        elif rep.failed:
            entry[1] = "FAIL"
            entry[2] = item.name


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: int(k[1:])):
        title, status, note = _ACCEPTANCE[key]
        suffix = f"  ({note})" if note else ""
        tr.write_line(f"{status:4s}  {key}  {title}{suffix}")
