import numpy as np
import pytest

_CRITERIA: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """Record one acceptance line: call with (ok, detail) once per criterion."""

    def record(ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  {request.node.name}: {detail}"
        _CRITERIA.append(line)
        print(line)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
