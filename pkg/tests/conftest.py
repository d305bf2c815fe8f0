"""Collects acceptance outcomes and prints one verdict line per criterion."""

_outcomes = {}


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker is not None:
            item.user_properties.append(("acceptance", tuple(marker.args)))


def pytest_runtest_logreport(report):
    criterion = dict(report.user_properties).get("acceptance")
    if criterion is None:
        return
    number, title = criterion
    ok = _outcomes.get(number, (True, title))[0]
    _outcomes[number] = (ok and not report.failed, title)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        ok, title = _outcomes[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
