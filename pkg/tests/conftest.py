import pytest

from rmtlab.rng import derive_stream

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return derive_stream(20241015, 0)


@pytest.fixture
def report_criterion():
    def record(cid: str, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {cid}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
