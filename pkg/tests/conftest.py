import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

FIXTURES = HERE / "fixtures"
MINI = FIXTURES / "mini"


@pytest.fixture(scope="session")
def mini_fixtures():
    return MINI


@pytest.fixture(scope="session")
def import_fixtures():
    return FIXTURES / "imports"


# acceptance bookkeeping: one PASS/FAIL line per criterion in the terminal summary
_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


class _Criterion:
    def __init__(self, lines, number, title, budget):
        self.lines, self.number, self.title, self.budget = lines, number, title, budget
        self.detail = ""

    def __enter__(self):
        import time

        self._t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        import time

        elapsed = time.perf_counter() - self._t0
        over = elapsed > self.budget
        ok = exc_type is None and not over
        note = self.detail
        if exc_type is not None:
            note = f"{exc_type.__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        elif over:
            note = f"{note}; over the {self.budget:g}s budget".lstrip("; ")
        line = f"criterion {self.number:<3} {'PASS' if ok else 'FAIL'}  {self.title} ({elapsed:.2f}s) {note}".rstrip()
        self.lines.append(line)
        print(line)
        if exc_type is None and over:
            raise AssertionError(f"criterion {self.number} took {elapsed:.1f}s, budget {self.budget:g}s")
        return False


@pytest.fixture
def criterion(request):
    lines = request.config.stash[_LINES]
    return lambda number, title, budget: _Criterion(lines, number, title, budget)


def _natural(line):
    number = line.split()[1]
    digits = "".join(ch for ch in number if ch.isdigit())
    return int(digits), number


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=_natural):
            terminalreporter.write_line(line)
