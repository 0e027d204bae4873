import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_LINES = pytest.StashKey()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def report(request):
    """Collects one ``[PASS]/[FAIL] criterion: detail`` line per acceptance check."""
    lines = request.config.stash[_LINES]

    def add(name, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        lines.append(line)
        print(line)
        return passed
    return add


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
