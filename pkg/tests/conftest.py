from __future__ import annotations

import pytest

RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[RESULTS] = []


class Criterion:
    """Collects named sub-checks of one acceptance criterion."""

    def __init__(self, number: int, title: str, sink: list):
        self.number = number
        self.title = title
        self.checks: list[tuple[bool, str]] = []
        self._sink = sink

    def check(self, ok: bool, detail: str) -> bool:
        self.checks.append((bool(ok), detail))
        return bool(ok)

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(ok for ok, _ in self.checks)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        parts = "; ".join(d if ok else f"{d} <-- FAIL" for ok, d in self.checks)
        return f"[{tag}] criterion {self.number}: {self.title}: {parts}"

    def finish(self) -> None:
        line = self.line()
        self._sink.append((self.number, line))
        print(line)
        assert self.passed, line


@pytest.fixture
def criterion(request):
    def make(number: int, title: str) -> Criterion:
        return Criterion(number, title, request.config.stash[RESULTS])
    return make


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(RESULTS, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(results):
        terminalreporter.write_line(line)
