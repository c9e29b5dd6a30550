import copy

import pytest

from aquaclean.engine import run_config
from aquaclean.world import default_config


@pytest.fixture(scope="session")
def _default_cfg():
    return default_config()


@pytest.fixture
def default_cfg(_default_cfg):
    return copy.deepcopy(_default_cfg)


@pytest.fixture(scope="session")
def default_run(_default_cfg):
    return run_config(_default_cfg)


# -- acceptance reporting -------------------------------------------------------

def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line and fail the test when ``ok`` is false."""

    def record(number, title, ok, detail=""):
        line = f"AC{number:>2} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        request.config._acceptance_lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l[2:4])):
            terminalreporter.write_line(line)
