import pytest


def pytest_configure(config):
    config._acceptance_lines = {}


@pytest.fixture
def criterion(request):
    """Record the one-line verdict for an acceptance criterion."""
    lines = request.config._acceptance_lines

    def record(number, title, passed, detail):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
        lines[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config._acceptance_lines
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
