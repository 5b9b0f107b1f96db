"""Pass/fail bookkeeping for the acceptance suite."""

from __future__ import annotations

import time
from contextlib import contextmanager

RESULTS: list[str] = []


@contextmanager
def criterion(number: int, title: str, limit_s: float | None = None):
    """Record one PASS/FAIL line; a failure inside the block (or overtime) re-raises."""
    start = time.perf_counter()
    try:
        yield
        elapsed = time.perf_counter() - start
        if limit_s is not None:
            assert elapsed < limit_s, f"took {elapsed:.2f}s, limit {limit_s}s"
    except BaseException as exc:
        elapsed = time.perf_counter() - start
        RESULTS.append(f"FAIL  {number}. {title} ({elapsed:.2f}s): {type(exc).__name__}: {exc}")
        print(RESULTS[-1])
        raise
    RESULTS.append(f"PASS  {number}. {title} ({elapsed:.2f}s)")
    print(RESULTS[-1])
