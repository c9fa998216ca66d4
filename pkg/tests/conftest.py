import pytest

ACCEPTANCE_LINES: dict[str, str] = {}


def record(criterion: str, ok: bool, detail: str) -> bool:
    ACCEPTANCE_LINES[criterion] = f"{criterion} {'PASS' if ok else 'FAIL'}  {detail}"
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: int(k[2:])):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def acceptance():
    return record
