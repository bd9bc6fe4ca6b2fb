"""The finite-difference suite is itself under test: it must pass on the
real gradients and flag a corrupted one."""

import time

from privemb.gradcheck import DEFAULT_TOLERANCE, all_cases, run_suite
from privemb.numkit import grad_check


def test_suite_all_pass_and_fast():
    start = time.perf_counter()
    results = run_suite()
    elapsed = time.perf_counter() - start
    assert len(results) >= 12
    failures = [(r.name, r.max_error) for r in results if not r.passed]
    assert not failures, failures
    assert max(r.max_error for r in results) < DEFAULT_TOLERANCE
    assert elapsed < 60.0

    names = {r.name for r in results}
    assert len(names) == len(results)  # no duplicate registrations
    for needle in ("link", "attr", "disc", "gen", "attacker", "encoder"):
        assert any(needle in n for n in names), needle


def test_corrupted_gradient_detected():
    name, fn, params = all_cases()[0]

    def corrupted(p):
        loss, grads = fn(p)
        return loss, {k: g * 1.25 for k, g in grads.items()}

    assert grad_check(corrupted, params) > DEFAULT_TOLERANCE


def test_cases_are_deterministic():
    a = run_suite()
    b = run_suite()
    assert [(r.name, r.max_error) for r in a] == [(r.name, r.max_error) for r in b]
