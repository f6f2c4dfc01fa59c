import collections

import pytest

_results = collections.OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    m = item.get_closest_marker("criterion")
    if m is None or call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    number, title = m.args
    entry = _results.setdefault(number, {"title": title, "ok": True, "tests": 0})
    entry["tests"] += 1 if call.when == "call" else 0
    if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_results):
        e = _results[number]
        status = "PASS" if e["ok"] else "FAIL"
        tr.write_line(f"criterion {number:>2}: {status}  {e['title']} ({e['tests']} test(s))")
