"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

from collections import OrderedDict

import pytest

_RESULTS: "OrderedDict[int, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion this test checks")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "notes": []})
    entry["ok"] &= report.passed
    for key, value in item.user_properties:
        if key == "measured":
            entry["notes"].append(str(value))
    if report.failed:
        entry["notes"].append(f"FAILED {item.name}")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "PASS" if entry["ok"] else "FAIL"
        line = f"[{status}] criterion {number:>2}: {entry['title']}"
        if entry["notes"]:
            line += " | " + "; ".join(entry["notes"])
        terminalreporter.write_line(line)
