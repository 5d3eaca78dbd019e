import pytest

from trafficwave.model import section4_params
from trafficwave.profiles import section4_profiles

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def params():
    return section4_params()


@pytest.fixture(scope="session")
def sec4_profiles(params):
    return section4_profiles(params)


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(label: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
