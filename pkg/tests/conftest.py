import pytest

from mflq.problem import load_fixture

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def fx():
    return load_fixture


@pytest.fixture
def report():
    """Record a one-line acceptance verdict, shown again in the terminal summary."""
    def _report(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
