import pytest

_AC_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    # a criterion fails if any phase fails; skips count as not passed
    if report.when == "call" or report.failed or report.skipped:
        prev = _AC_RESULTS.get(number, (title, True))[1]
        _AC_RESULTS[number] = (title, prev and report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _AC_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_AC_RESULTS):
        title, ok = _AC_RESULTS[number]
        terminalreporter.write_line(f"AC{number} {'PASS' if ok else 'FAIL'}  {title}")
