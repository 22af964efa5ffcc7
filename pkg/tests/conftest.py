from __future__ import annotations

import time
from contextlib import contextmanager

import pytest

_verdicts = pytest.StashKey[dict]()


class CriterionRecorder:
    """Records one PASS/FAIL verdict per acceptance criterion."""

    def __init__(self, store: dict):
        self._store = store

    @contextmanager
    def check(self, number: int, title: str, budget: float | None = None):
        start = time.perf_counter()
        detail = ""
        ok = False
        try:
            yield
            elapsed = time.perf_counter() - start
            detail = f"{elapsed:.1f}s"
            if budget is not None:
                detail += f" (budget {budget:g}s)"
                assert elapsed < budget, f"criterion {number} took {elapsed:.1f}s, budget {budget:g}s"
            ok = True
        except BaseException as exc:
            detail = f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
            raise
        finally:
            line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title}  [{detail}]"
            self._store[number] = line
            print(line)


@pytest.fixture
def criterion(request):
    store = request.config.stash.setdefault(_verdicts, {})
    return CriterionRecorder(store)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_verdicts, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        terminalreporter.write_line(store[number])
