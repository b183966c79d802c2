"""Acceptance criteria, one test per criterion.

Each test prints a single ``CRITERION n PASS|FAIL`` line (also repeated in
the terminal summary).  Run standalone with ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import pytest

from dynbn import verify

CRITERIA = [
    (1, "gaussian exactness (200 random scenarios, 1e-8, < 10 s)", [verify.check_gaussian_exactness]),
    (2, "DGLM conjugacy identities (1e-12 / 1e-10 relative, < 1 s)", [verify.check_dglm_conjugacy]),
    (3, "Hellinger closed forms vs quadrature, axioms, sandwich", [verify.check_hellinger]),
    (4, "marginalization equality and monotonicity", [verify.check_marginalization]),
    (5, "normal vs moment-matched gamma audit", [verify.check_normal_gamma]),
    (6, "Poisson error-bound behavior at m=w2=y in {20,25,50}", [verify.check_bounds]),
    (7, "small-count degradation", [verify.check_small_counts]),
    (8, "kalman-chain reduction to scalar Kalman filter (1e-10)", [verify.check_kalman_reduction]),
    (9, "dispersal-chain fixture (< 5 s, diagnostics, invariants)", [verify.check_dispersal]),
]

RESULTS: list[str] = []


def evaluate(number, title, fns):
    checks = [c for fn in fns for c in fn()]
    ok = all(c.passed for c in checks)
    head = f"CRITERION {number} {'PASS' if ok else 'FAIL'}: {title}"
    return ok, head, checks


@pytest.mark.parametrize("number, title, fns", CRITERIA, ids=[f"criterion_{n}" for n, *_ in CRITERIA])
def test_criterion(number, title, fns):
    ok, head, checks = evaluate(number, title, fns)
    RESULTS.append(head)
    print(head)
    for c in checks:
        print("    " + c.line())
    assert ok, "\n".join(c.line() for c in checks if not c.passed)


if __name__ == "__main__":
    import sys

    failed = 0
    for number, title, fns in CRITERIA:
        ok, head, checks = evaluate(number, title, fns)
        print(head)
        for c in checks:
            print("    " + c.line())
        failed += not ok
    sys.exit(1 if failed else 0)
