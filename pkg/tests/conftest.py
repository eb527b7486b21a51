"""Per-criterion summary for the acceptance suite.

Tests marked ``@pytest.mark.criterion(n, "title")`` are grouped by ``n``;
the terminal summary prints one PASS / FAIL / SKIP line per criterion.
"""

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test checks")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _RESULTS.setdefault(number, {"title": title, "outcomes": []})
    if report.when == "call" or (report.when == "setup" and not report.passed):
        entry["outcomes"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        outcomes = entry["outcomes"]
        if "failed" in outcomes:
            status = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {entry['title']}")
