import pytest

CRITERIA: list[str] = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion; printed again at session end."""

    def emit(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else "")
        print(line)
        CRITERIA.append(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA):
            terminalreporter.write_line(line)
