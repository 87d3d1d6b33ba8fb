import pytest
from hypothesis import settings

from tdcache import presets

settings.register_profile("tdcache", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("tdcache")


@pytest.fixture(scope="session")
def pi1():
    return presets.flow("pi1")


@pytest.fixture(scope="session")
def pi2():
    return presets.flow("pi2")


@pytest.fixture(scope="session")
def pi3():
    return presets.flow("pi3")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(RESULTS, key=lambda c: int(c[1:])):
            terminalreporter.write_line(RESULTS[cid].line())
