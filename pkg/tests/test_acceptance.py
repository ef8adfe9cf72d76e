"""Acceptance criteria 1-10, each run at its stated tolerance through a verification suite.

One PASS/FAIL line per criterion is printed (uncaptured) so that it shows in
``pytest -v`` logs.  Criterion 8 runs the default-resolution pinch scenario and
takes several minutes.
"""

import pytest

from lmcflab.lab.suites import run_suite

CRITERIA = [
    (1, "exact statics", "statics"),
    (2, "exact shrinkers", "shrinkers"),
    (3, "monotonicity", "monotonicity"),
    (4, "spectral", "spectral"),
    (5, "three-annulus", "three-annulus"),
    (6, "excess-distance inequality", "excess-distance"),
    (7, "|zw| equivalence", "zw"),
    (8, "pinch phenomenology", "pinch"),
    (9, "exactness and rationality", "exactness"),
    (10, "determinism", "determinism"),
]


@pytest.mark.parametrize("num,title,suite", CRITERIA, ids=[c[2] for c in CRITERIA])
def test_criterion(num, title, suite, capsys):
    rep = run_suite(suite)
    verdict = "PASS" if rep.passed else "FAIL"
    with capsys.disabled():
        lim = "" if rep.runtime_limit is None else f" (limit {rep.runtime_limit:.0f} s)"
        print(f"\ncriterion {num:>2} ({title}): {verdict} in {rep.runtime:.1f} s{lim}")
        for c in rep.checks:
            print("    " + c.line())
    assert rep.passed, rep.text()
