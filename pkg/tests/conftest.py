import pytest

# (criterion, passed, detail) lines recorded by the acceptance suite
ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    def record(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip()
        print(line)
        ACCEPTANCE.append((name, passed, detail))
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip())
