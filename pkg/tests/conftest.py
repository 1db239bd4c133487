"""Collects acceptance results and prints one line per criterion at the end of the run."""

from collections import defaultdict

import pytest

_results = defaultdict(list)
_titles = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _titles[number] = title
    if report.when == "call" or (report.when == "setup" and report.failed):
        _results[number].append((item.name, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        runs = _results[number]
        ok = all(passed for _, passed in runs)
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {_titles[number]}"
        failed = [name for name, passed in runs if not passed]
        if failed:
            line += f"  (failing: {', '.join(failed)})"
        terminalreporter.write_line(line)
