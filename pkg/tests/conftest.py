import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_line():
    """Record a one-line PASS/FAIL verdict, shown in the terminal summary."""
    def record(text: str) -> None:
        ACCEPTANCE_LINES.append(text)
        print(text)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
