import pytest

_RESULTS: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when != "call" and not report.failed:
        return
    number, title = mark.args
    prev_title, states = _RESULTS.get(number, (title, []))
    states.append("PASS" if report.passed else "FAIL")
    _RESULTS[number] = (prev_title, states)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_RESULTS):
        title, states = _RESULTS[number]
        verdict = "PASS" if all(s == "PASS" for s in states) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
