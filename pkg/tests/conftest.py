import pytest

from dgfair.config import default_base_spec
from dgfair.domains import make_rotation_family


@pytest.fixture
def base_spec():
    return default_base_spec()


@pytest.fixture
def rotation4(base_spec):
    return make_rotation_family(4, base_spec, 30.0)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
