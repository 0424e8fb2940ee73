from pathlib import Path

import pytest

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"

_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion exercised by a test")


@pytest.fixture
def problems():
    return PROBLEMS


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, text = mark.args
    ok = rep.passed if rep.when == "call" else not rep.failed
    prev = _criteria.get(number, (True, text))
    _criteria[number] = (prev[0] and ok, text)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        ok, text = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}")
