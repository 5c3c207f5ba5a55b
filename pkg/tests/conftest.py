from collections import defaultdict

import numpy as np
import pytest

from latticemd.potential import parse_potential_file
from latticemd.synthetic import write_synthetic_potential

_CRITERIA = defaultdict(list)
_TITLES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    _TITLES[number] = title
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        measured = [f"{k}={v}" for k, v in item.user_properties]
        _CRITERIA[number].append((item.name, rep.outcome, measured))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        results = _CRITERIA[number]
        ok = all(outcome == "passed" for _, outcome, _ in results)
        failed = [name for name, outcome, _ in results if outcome != "passed"]
        status = "PASS" if ok else "FAIL"
        detail = f" ({', '.join(failed)})" if failed else ""
        tr.write_line(f"criterion {number:>2} {status}  {_TITLES[number]}{detail}")
        measured = [m for _, _, ms in results for m in ms]
        if measured:
            tr.write_line(f"              {'  '.join(measured)}")


@pytest.fixture(scope="session")
def potential_path(tmp_path_factory):
    return write_synthetic_potential(tmp_path_factory.mktemp("pot") / "fe_synthetic.eam")


@pytest.fixture(scope="session")
def pot(potential_path):
    return parse_potential_file(potential_path)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
