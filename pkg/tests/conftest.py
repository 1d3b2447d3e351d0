import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[bool, str]] = {}


class CriterionRecorder:
    """Records one outcome per acceptance criterion; printed after the run."""

    def __init__(self, number: int):
        self.number = number

    def check(self, ok: bool, detail: str):
        _CRITERIA[self.number] = (bool(ok), detail)
        line = f"criterion {self.number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        assert ok, line


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    return CriterionRecorder(marker.args[0])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
