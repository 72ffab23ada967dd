"""The thirteen acceptance criteria at their stated tolerances.

All criteria share one context so the expensive runs (protocol I at the
defaults, the six-point g3 sweep, the t_int sweep, the halved-dt run) happen
once.  Each criterion prints a single PASS/FAIL line; the lines are repeated
in the terminal summary.
"""

import pytest

from qrefrig.acceptance import CRITERIA, AcceptanceContext, run_criterion

ACCEPTANCE_LINES = []


@pytest.fixture(scope="module")
def context():
    return AcceptanceContext()


@pytest.mark.slow
@pytest.mark.parametrize("number", [c[0] for c in CRITERIA], ids=[f"{c[0]:02d}-{c[1].replace(' ', '_')}" for c in CRITERIA])
def test_criterion(number, context):
    res = run_criterion(number, context)
    line = res.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert res.passed, line
