import time

import pytest

_results: list[str] = []
_started = time.perf_counter()

SUITE_BUDGET_SECONDS = 60.0


@pytest.fixture
def criterion():
    """Record one acceptance line; the test still fails through its own assert."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" ({detail})" if detail else "")
        _results.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    elapsed = time.perf_counter() - _started
    terminalreporter.section("acceptance criteria")
    for line in _results:
        terminalreporter.write_line(line)
    ok = elapsed < SUITE_BUDGET_SECONDS
    terminalreporter.write_line(
        f"{'PASS' if ok else 'FAIL'} criterion 8: full suite under {SUITE_BUDGET_SECONDS:.0f} s ({elapsed:.1f} s)"
    )
