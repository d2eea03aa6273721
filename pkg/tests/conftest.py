import pytest

# criterion number -> list of (passed, detail), filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail):
        ACCEPTANCE.setdefault(number, []).append((bool(passed), detail))
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  " + "; ".join(d for _, d in parts))
