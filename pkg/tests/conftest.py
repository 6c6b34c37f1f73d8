"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_outcomes: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    result = yield
    report = result.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    measured = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    if report.when == "call" or (report.failed and number not in _outcomes):
        status = "PASS" if report.passed else "FAIL"
        _outcomes[number] = (status, title, measured)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        status, title, measured = _outcomes[number]
        line = f"criterion {number:>2}: {status}  {title}"
        if measured:
            line += f"  [{measured}]"
        terminalreporter.write_line(line)
