import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from prokex.chain import DATA_DIR, FewShotAssets, load_stage_specs
from prokex.heuristic import HeuristicBackend, Lexicons
from prokex.kg import OntologyTerms

GOLDEN = Path(__file__).parent / "golden"
FIXTURES = Path(__file__).parent / "fixtures"
SAMPLES = DATA_DIR / "samples"


@pytest.fixture(scope="session")
def specs():
    return load_stage_specs()


@pytest.fixture(scope="session")
def spec_by_id(specs):
    return {s.stage_id: s for s in specs}


@pytest.fixture(scope="session")
def assets():
    return FewShotAssets.load()


@pytest.fixture(scope="session")
def lexicons():
    return Lexicons.load()


@pytest.fixture(scope="session")
def terms():
    return OntologyTerms()


@pytest.fixture(scope="session")
def heuristic(specs, lexicons, terms):
    return HeuristicBackend(specs, lexicons, terms)


_criteria: dict = {}


def pytest_runtest_logreport(report):
    # a criterion passes only if every phase of every test under it passed
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    ok = _criteria.get(number, (title, True))[1]
    _criteria[number] = (title, ok and report.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
