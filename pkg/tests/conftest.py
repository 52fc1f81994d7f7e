import pytest

from acceptance_log import LOG


def pytest_terminal_summary(terminalreporter):
    if not LOG.criteria:
        return
    terminalreporter.section("acceptance criteria")
    for line in LOG.lines():
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    return LOG
