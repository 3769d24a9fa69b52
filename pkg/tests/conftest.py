import pytest

# (criterion number, passed, detail) appended by the acceptance tests
ACCEPTANCE = []


@pytest.fixture
def verdict():
    def record(number, passed, detail):
        ACCEPTANCE.append((number, bool(passed), detail))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")
        assert passed, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
