from __future__ import annotations

import numpy as np
import pytest

from hybrid_dsa.dae import SolverConfig
from hybrid_dsa.power import equilibrium, load_case, shipped_case
from hybrid_dsa.scenario import build_problem, load_scenario, shipped_scenario


@pytest.fixture(scope="session")
def smib_case():
    return load_case(shipped_case("smib"))


@pytest.fixture(scope="session")
def ne39_case():
    return load_case(shipped_case("ne39"))


@pytest.fixture(scope="session")
def smib_eq(smib_case):
    return equilibrium(smib_case, smib_case.mode_id("q2"))


@pytest.fixture(scope="session")
def ne39_eq(ne39_case):
    return equilibrium(ne39_case, ne39_case.mode_id("q2"))


@pytest.fixture(scope="session")
def smib_scenario():
    return load_scenario(shipped_scenario("smib"))


@pytest.fixture(scope="session")
def ne39_scenario():
    return load_scenario(shipped_scenario("ne39"))


@pytest.fixture(scope="session")
def smib_problem(smib_scenario):
    return build_problem(smib_scenario)


@pytest.fixture(scope="session")
def ne39_problem(ne39_scenario):
    return build_problem(ne39_scenario)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg():
    return SolverConfig(h=0.01)


# -- one pass/fail line per acceptance criterion ---------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n = mark.args[0]
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    ok, details = _CRITERIA.get(n, (True, []))
    _CRITERIA[n] = (ok and rep.passed, details + [detail or item.name])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, details = _CRITERIA[n]
        line = "; ".join(details)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {line}")
