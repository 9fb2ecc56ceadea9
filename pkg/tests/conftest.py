import numpy as np
import pytest

from pvminv.grid import GridSpec


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def cube16():
    return GridSpec.cube(16)


@pytest.fixture
def cube8():
    return GridSpec.cube(8)


@pytest.fixture
def column256():
    return GridSpec.column(256)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion after the run

_criteria = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", tuple(mark.args)))


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when != "call" and report.passed:
        return
    number, title = crit
    entry = _criteria.setdefault(number, {"title": title, "parts": []})
    if report.passed:
        status = "pass"
    elif hasattr(report, "wasxfail"):
        status = "known failure"
    elif report.skipped:
        status = "skipped"
    else:
        status = "fail"
    entry["parts"].append((report.nodeid.split("::")[-1], status))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        bad = [f"{name} ({status})" for name, status in entry["parts"] if status != "pass"]
        line = f"{'PASS' if not bad else 'FAIL'} [{number:2d}] {entry['title']}"
        if bad:
            line += ": " + ", ".join(bad)
        tr.write_line(line)
