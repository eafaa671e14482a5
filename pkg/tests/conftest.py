import pytest

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, passed, detail)``."""
    lines = request.config.stash[_KEY]

    def record(n, passed, detail):
        lines.append((n, passed, detail))
        return passed
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = sorted(config.stash[_KEY], key=lambda t: t[0])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n, passed, detail in lines:
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
