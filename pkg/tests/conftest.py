import pytest

_lines: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records the outcome line for acceptance criterion n."""
    def record(n: int, ok, detail: str) -> None:
        status = {True: "PASS", False: "FAIL", None: "NOT RUN"}[ok]
        _lines[n] = f"criterion {n}: {status}  {detail}"
        print(_lines[n])
    return record


def pytest_terminal_summary(terminalreporter):
    if _lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_lines):
            terminalreporter.write_line(_lines[n])
