import pytest
from hypothesis import settings

from reshuffle.problems import load_fixture

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture(scope="session")
def ex1():
    return load_fixture("example1")


@pytest.fixture(scope="session")
def quad7():
    return load_fixture("quad7")


@pytest.fixture(scope="session")
def smooth1():
    return load_fixture("smooth1")


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    import time

    marker = request.node.get_closest_marker("criterion")
    number, limit = marker.args
    start = time.perf_counter()
    state = {}

    def record(passed, detail):
        elapsed = time.perf_counter() - start
        ok = bool(passed) and elapsed < limit
        state["ok"] = ok
        ACCEPTANCE[number] = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s < {limit}s]"
        return ok

    yield record
    if "ok" not in state:
        ACCEPTANCE[number] = f"criterion {number:>2} FAIL  (no result recorded)"


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, runtime_limit): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
