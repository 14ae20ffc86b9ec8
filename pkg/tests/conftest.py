import pytest

_LINES = {}


@pytest.fixture
def verdict():
    """Record one pass/fail line for an acceptance criterion; returns the pass flag."""

    def record(number, checks, detail=""):
        failed = [k for k, ok in checks.items() if not ok]
        status = "PASS" if not failed else "FAIL (" + ", ".join(failed) + ")"
        line = f"criterion {number}: {status}" + (f"  {detail}" if detail else "")
        _LINES[number] = line
        print(line)
        return not failed

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_LINES):
            terminalreporter.write_line(_LINES[number])
