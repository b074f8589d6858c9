"""Per-criterion PASS/FAIL summary for tests marked ``criterion(n, title)``."""
import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion the test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "passed": 0, "failed": [], "skipped": 0})
    if report.when == "call":
        if report.passed:
            entry["passed"] += 1
        elif report.failed:
            entry["failed"].append(item.name)
        else:
            entry["skipped"] += 1
    elif report.failed:
        entry["failed"].append(f"{item.name} ({report.when})")
    elif report.skipped:
        entry["skipped"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        ok = not entry["failed"] and not entry["skipped"] and entry["passed"] > 0
        line = f"CRITERION {number} {'PASS' if ok else 'FAIL'}: {entry['title']} ({entry['passed']} passed"
        if entry["failed"]:
            line += f", failed: {', '.join(entry['failed'])}"
        if entry["skipped"]:
            line += f", {entry['skipped']} skipped"
        terminalreporter.write_line(line + ")")
