import pytest

from meterlink.net_server import read_log
from meterlink.sim import preset, run

_acceptance_lines: list[str] = []


class _Run:
    def __init__(self, name: str, seed: int | None = None):
        self.scenario = preset(name, seed)
        self.result = run(self.scenario)
        self.rows = read_log(self.result.log_lines)


@pytest.fixture(scope="session")
def preset_runs():
    cache = {}

    def get(name: str) -> _Run:
        if name not in cache:
            cache[name] = _Run(name)
        return cache[name]

    return get


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _acceptance_lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines):
            terminalreporter.write_line(line)
