import pytest

_CRITERIA = []


@pytest.fixture
def criterion_log(capsys):
    """Record one ``CRITERION k: PASS|FAIL`` line; all lines are repeated in the terminal summary."""
    def log(k, passed, detail):
        line = f"CRITERION {k}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append((k, line))
        with capsys.disabled():
            print("\n" + line)
    return log


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA, key=lambda x: x[0]):
            terminalreporter.write_line(line)
