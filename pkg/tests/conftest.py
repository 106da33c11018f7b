import numpy as np
import pytest

from selfreg_kd.data import synthetic_blobs


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def blobs():
    return synthetic_blobs(3, 200, 10, 6.0, seed=0)


@pytest.fixture(scope="session")
def blobs_test():
    return synthetic_blobs(3, 200, 10, 6.0, seed=1)


# -- acceptance summary ------------------------------------------------------
# Tests marked ``@pytest.mark.criterion(n, title)`` are grouped by n and
# reported as one PASS/FAIL/SKIP line each at the end of the session.

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "outcomes": []})
    if report.when == "call" or report.outcome != "passed":
        entry["outcomes"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        outcomes = _criteria[number]["outcomes"]
        if any(o == "failed" for o in outcomes):
            status = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {number}: {status}  {_criteria[number]['title']}")
