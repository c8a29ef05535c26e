import pytest

# (criterion number, title, passed, detail) rows collected by the acceptance tests
CRITERIA = []


def record(number, title, passed, detail=""):
    CRITERIA.append((number, title, bool(passed), detail))
    print(f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")


@pytest.fixture
def report():
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(CRITERIA, key=lambda r: r[0]):
        terminalreporter.write_line(
            f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}")
