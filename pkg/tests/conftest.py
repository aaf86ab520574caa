import os

import numpy as np
import pytest

os.environ.setdefault("OMP_NUM_THREADS", "1")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance summary: one line per criterion, aggregated over its tests

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "status": "PASS", "seconds": 0.0, "note": ""})
    if rep.when in ("setup", "call"):  # setup carries shared fixtures such as the toy run
        entry["seconds"] += rep.duration
    if rep.skipped and entry["status"] == "PASS":
        entry["status"] = "SKIP"
        entry["note"] = str(rep.longrepr[-1]) if isinstance(rep.longrepr, tuple) else ""
    elif rep.failed:
        entry["status"] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        note = f"  ({e['note']})" if e["note"] else ""
        terminalreporter.write_line(f"AC{number:<3} {e['status']:<5} {e['title']}  [{e['seconds']:.1f} s]{note}")
