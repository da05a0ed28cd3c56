import pytest

CRITERIA = {}


@pytest.fixture
def criterion(request):
    """Record a one-line pass/fail verdict for an acceptance criterion."""

    def record(number, title, ok, detail):
        CRITERIA[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title} | {detail}"
        print(CRITERIA[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[number])
