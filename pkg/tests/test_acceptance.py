"""Acceptance criteria A1-A14 at their stated tolerances.

Each criterion prints one PASS/FAIL line; the lines are repeated in the
terminal summary.  Criteria that the model cannot meet fail here on purpose.
"""

import json

import pytest

from tdcache import blocking, validation

RESULTS = {}


@pytest.mark.parametrize("cid", list(validation.CRITERIA))
def test_criterion(cid):
    r = validation.run_check(cid, seed=0, workers=2)
    RESULTS[cid] = r
    print(r.line())
    assert r.passed, json.dumps(r.detail, indent=1)[:4000]


def test_a3_detects_perturbed_erlang():
    out = validation.check_a3(erlang=lambda L, a: blocking.erlang_b(L, a) + 1e-3)
    assert not out["passed"]


def test_check_result_line_format():
    r = validation.CheckResult("A7", "title", True, 1.25, {})
    assert r.line().split()[:2] == ["A7", "PASS"]
    assert r.to_dict()["passed"] is True
