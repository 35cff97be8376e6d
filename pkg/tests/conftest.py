"""Collects acceptance results and prints one PASS/FAIL line per criterion."""

_results = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    label = report.user_properties and dict(report.user_properties).get("acceptance")
    if label:
        ok = report.passed
        _results[label] = _results.get(label, True) and ok


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker:
            item.user_properties.append(("acceptance", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_results, key=lambda s: int(s.split()[0][2:])):
        terminalreporter.write_line("%s  %s" % ("PASS" if _results[label] else "FAIL", label))
