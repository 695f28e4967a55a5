"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are printed even
when output capture is on. ``python3 tests/test_acceptance.py`` runs the same
checks without pytest.
"""

import time

import pytest

from geomkit import selftest

# wall-clock limits stated per criterion, in seconds
TIME_LIMITS = {1: 1.0, 2: 5.0, 4: 30.0, 11: 120.0}

_elapsed = {}


def _run(number, capsys):
    (name, fn), = [(n, f) for k, n, f in selftest.CHECKS if k == number]
    result = selftest.run_one(number, name, fn)
    limit = TIME_LIMITS.get(number)
    if limit is not None and result.seconds >= limit:
        result.passed = False
        result.details["time_limit_s"] = limit
    _elapsed[number] = result.seconds
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()


@pytest.mark.parametrize("number", [n for n, _, _ in selftest.CHECKS], ids=lambda n: f"criterion_{n}")
def test_criterion(number, capsys):
    _run(number, capsys)


@pytest.mark.slow
def test_criterion_10_t_to_o(capsys):
    (number, name, fn), = selftest.SLOW_CHECKS
    result = selftest.run_one(number, name, fn)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()


def test_criterion_13_suite_runtime(capsys):
    missing = [n for n, _, _ in selftest.CHECKS if n not in _elapsed]
    if missing:
        # run on its own: time the whole fast tier here
        t0 = time.perf_counter()
        for number, name, fn in selftest.CHECKS:
            selftest.run_one(number, name, fn)
        total = time.perf_counter() - t0
    else:
        total = sum(_elapsed.values())
    result = selftest.CheckResult(13, "suite runtime", total < 300.0, total, {"budget_s": 300})
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()


if __name__ == "__main__":
    import sys
    results = selftest.run(slow=True)
    sys.exit(0 if all(r.passed for r in results) else 1)
