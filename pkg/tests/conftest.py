import functools

import pytest

from wtrom import harness, scenario

_RESULTS: dict[int, tuple[bool, str]] = {}


@functools.lru_cache(maxsize=None)
def bundled(name: str):
    return scenario.load_bundled(name)


@functools.lru_cache(maxsize=None)
def run_both(name: str):
    """Cached ROM/refmodel run of a bundled scenario, with its wall time."""
    import time

    t0 = time.perf_counter()
    out = harness.run(bundled(name), "both")
    return out, time.perf_counter() - t0


@pytest.fixture
def record_criterion():
    """Record a pass/fail line for an acceptance criterion.

    Several tests may report on the same criterion; it passes only if all do.
    """

    def rec(number: int, ok: bool, detail: str):
        prev_ok, prev_detail = _RESULTS.get(number, (True, ""))
        detail = f"{prev_detail}; {detail}" if prev_detail else detail
        _RESULTS[number] = (prev_ok and ok, detail)
        print(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return rec


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}")
