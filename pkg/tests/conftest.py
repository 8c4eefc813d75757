import pytest

_LINES = []


@pytest.fixture
def report():
    """record(label, passed, detail) adds one line to the acceptance summary."""
    def record(label, passed, detail):
        _LINES.append(f"{'PASS' if passed else 'FAIL'}  {label}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
