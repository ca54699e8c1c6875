"""Shared pytest wiring: acceptance criteria report one summary line each."""

import contextlib
import time

import pytest

_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_KEY] = {}


class _Outcome:
    def __init__(self):
        self.detail = ""


@pytest.fixture
def criterion(request):
    """Context manager factory: ``with criterion(1, "name") as c: ...; c.detail = "..."``."""
    lines = request.config.stash[_KEY]

    @contextlib.contextmanager
    def run(number, title):
        outcome = _Outcome()
        start = time.perf_counter()
        try:
            yield outcome
        except pytest.skip.Exception as exc:
            lines[number] = f"criterion {number} SKIP  {title}: {exc.msg}"
            raise
        except BaseException as exc:
            msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
            lines[number] = f"criterion {number} FAIL  {title}: {msg}"
            raise
        took = time.perf_counter() - start
        lines[number] = f"criterion {number} PASS  {title}: {outcome.detail} ({took:.1f} s)"
        print(lines[number])

    return run


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_KEY, {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(lines):
        terminalreporter.write_line(lines[number])
