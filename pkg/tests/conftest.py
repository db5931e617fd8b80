import time

import pytest

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if report.passed else "FAIL"
    _CRITERIA.append((number, status, title, detail, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, title, detail, duration in sorted(_CRITERIA):
        line = f"[{status}] criterion {number:>2}: {title} ({duration:.1f} s)"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def detail(record_property):
    """Attach a one-line measurement summary to the acceptance report."""
    def _set(text):
        record_property("detail", text)
    return _set


@pytest.fixture
def stopwatch():
    start = time.perf_counter()
    return lambda: time.perf_counter() - start
