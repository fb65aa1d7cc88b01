import os

import pytest

from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

LONG = os.environ.get("MAASTAR_LONG") == "1"

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion the test belongs to")


def pytest_collection_modifyitems(config, items):
    skip = pytest.mark.skip(reason="long run; set MAASTAR_LONG=1")
    for item in items:
        if "long" in item.keywords and not LONG:
            item.add_marker(skip)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _criteria.setdefault(n, {"title": title, "passed": 0, "failed": 0, "skipped": 0})
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if rep.skipped:
            entry["skipped"] += 1
        elif rep.failed:
            entry["failed"] += 1
        else:
            entry["passed"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        e = _criteria[n]
        status = "FAIL" if e["failed"] or not e["passed"] else "PASS"
        extra = f", {e['skipped']} opt-in skipped" if e["skipped"] else ""
        terminalreporter.write_line(
            f"criterion {n}: {status}  {e['title']}  ({e['passed']} passed, {e['failed']} failed{extra})"
        )
