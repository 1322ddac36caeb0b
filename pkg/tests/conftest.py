"""Shared fixtures and the acceptance summary printed at the end of a run."""
import numpy as np
import pytest

from fraclap import kernels as K
from fraclap.domain import Ball, Domain

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    num, title = mark.args
    ok = rep.passed and _ACCEPTANCE.get(num, (True,))[0]
    if rep.when == "call" or not rep.passed:
        _ACCEPTANCE[num] = (ok, title, getattr(item, "measured", ""))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        ok, title, measured = _ACCEPTANCE[num]
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{measured}]" if measured else ""))


@pytest.fixture
def measured(request):
    """Attach a measured-value string to the acceptance line of this test."""
    def record(text):
        request.node.measured = text
        print(text)
    return record


@pytest.fixture(scope="session")
def p2():
    return K.make_params(2, 0.5)


@pytest.fixture(scope="session")
def unit_disk():
    return Ball(np.zeros(2), 1.0)


@pytest.fixture(scope="session")
def disk_domain(unit_disk):
    return Domain([unit_disk])


@pytest.fixture(scope="session")
def lens():
    return Domain.lens(Ball([0.0, 0.0], 2.0), Ball([2.5, 0.0], 1.0))
