import pytest

ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome; the lines are printed at the end of the session."""

    def record(number: int, name: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE.append((number, name, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {name}: {detail}")
