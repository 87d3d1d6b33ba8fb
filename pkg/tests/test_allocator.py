import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from tdcache import allocator, ratecost, rdi
from tdcache.allocator import FlowSpec


def lp_cost(flow, target, n=300):
    """Independent oracle: randomize over static policies of every class with an LP."""
    cols_r, cols_s, rows = [], [], []
    active = [(p, s) for p, s in flow.classes if p > 0]
    for i, (p, spec) in enumerate(active):
        top = spec.law.demand * (1 - 1e-7)
        r = np.concatenate([[0.0], np.linspace(0, top, n)[1:], top * (1 - np.logspace(-6, -1, 40))])
        s = ratecost.rate_cost(spec, r)
        cols_r.extend(p * r)
        cols_s.extend(p * s)
        rows.extend([i] * len(r))
    m = len(cols_r)
    A_eq = np.zeros((len(active), m))
    A_eq[rows, np.arange(m)] = 1.0
    res = linprog(cols_s, A_ub=[-np.array(cols_r)], b_ub=[-target], A_eq=A_eq, b_eq=np.ones(len(active)), bounds=(0, None), method="highs")
    assert res.status == 0
    return res.fun


@pytest.mark.parametrize("target", [0.1, 0.3, 0.5, 0.7, 0.85])
def test_allocate_matches_lp(pi1, pi2, pi3, target):
    for f in (pi1, pi2, pi3):
        if target >= f.r_sup:
            continue
        a = allocator.allocate(f, target)
        assert a.r == pytest.approx(target, abs=1e-9)
        assert a.s == pytest.approx(lp_cost(f, target), rel=2e-3, abs=1e-4)
        assert a.s <= lp_cost(f, target) + 1e-9


def test_pi2_exact_values(pi2):
    a = allocator.allocate(pi2, 0.7)
    assert a.s == pytest.approx(0.6, abs=1e-12)
    assert a.beta == pytest.approx(1.0)
    oc = allocator.overall_cost_rate(pi2)
    assert oc.r_of_s(0.8) == pytest.approx(0.85)
    assert oc.s_end == pytest.approx(1.1)
    assert allocator.endpoint_derivatives(pi2) == pytest.approx((2.0, 0.5))


def test_lp_greedy_equals_bisection(pi2):
    for target in (0.1, 0.2, 0.5, 0.8, 0.95):
        assert allocator.allocate_lp(pi2, target).s == pytest.approx(allocator.allocate(pi2, target).s, abs=1e-10)


def test_tie_split_is_proportional(pi2):
    # p1, p3 and p7 share marginal cost 1; inside that segment they receive the same fraction
    a = allocator.allocate(pi2, 0.5)
    fr = [a.r_class[i] for i in (0, 2, 6)]
    assert fr[0] == pytest.approx(fr[1]) == pytest.approx(fr[2])
    assert a.r_class[1] == pytest.approx(1.0) and a.r_class[7] == 0.0


def test_sups(pi1, pi2, pi3):
    assert (pi1.r_sup, pi2.r_sup, pi3.r_sup) == pytest.approx((0.9, 1.0, 0.8))
    assert math.isinf(pi1.s_sup) and math.isinf(pi3.s_sup) and pi2.s_sup == pytest.approx(1.1)
    with pytest.raises(allocator.InfeasibleTarget):
        allocator.allocate(pi3, 0.8)


@given(st.sampled_from(["pi1", "pi2", "pi3"]), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_overall_curve_monotone_concave(name, a, b):
    from tdcache import presets

    oc = allocator.overall_cost_rate(presets.flow(name))
    hi = oc.s[-1]
    s1, s2 = sorted((a * hi, b * hi))
    r1, r2 = oc.r_of_s(s1), oc.r_of_s(s2)
    assert r1 <= r2 + 1e-12
    mid = oc.r_of_s(0.5 * (s1 + s2))
    assert mid >= 0.5 * (r1 + r2) - 1e-9


def test_policies_for_cost_inverts(pi1):
    for s in (0.2, 0.6, 1.5):
        a = allocator.policies_for_cost(pi1, s)
        assert a.s == pytest.approx(s, rel=1e-6)
        assert allocator.allocate(pi1, a.r).s == pytest.approx(s, rel=1e-5)


def test_policy_stats_mean_matches_cost(pi1):
    a = allocator.policies_for_cost(pi1, 1.0)
    stats = allocator.policy_stats(pi1, a.policies)
    assert stats.s == pytest.approx(1.0, rel=1e-6)
    assert stats.r == pytest.approx(a.r, rel=1e-9)
    assert 0 < stats.sq_integral <= stats.s


def test_single_exponential_class():
    f = FlowSpec(((1.0, rdi.exponential(2.0)),))
    a = allocator.allocate(f, 0.4)
    assert a.s == pytest.approx(0.2)


def test_flow_validation():
    with pytest.raises(ValueError):
        FlowSpec(((0.5, rdi.exponential(1.0)),))
    with pytest.raises(ValueError):
        FlowSpec(((1.0, rdi.exponential(1.0)),), lam=0)
