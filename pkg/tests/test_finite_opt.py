import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from tdcache import blocking, finite_opt


def pi2_envelope(s):
    """Overall curve of pi2 by hand: slopes 1/0.5, 1/1 and 1/2 on cost pieces of 0.1, 0.6 and 0.4."""
    if s <= 0.1:
        return 2.0 * s
    if s <= 0.7:
        return 0.2 + (s - 0.1)
    return min(0.8 + 0.5 * (s - 0.7), 1.0)


def pi2_oracle(L, lam):
    f = lambda s: -pi2_envelope(s) * (1 - blocking.erlang_b_gamma(L, lam * s))  # noqa: E731
    best = None
    for lo, hi in ((1e-9, 0.1), (0.1, 0.7), (0.7, 1.1)):
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        for s in (lo, hi, res.x):
            if best is None or f(s) < best[1] - 1e-15:
                best = (s, f(s))
    return best[0], -best[1]


@pytest.mark.parametrize("L", [2, 5, 10, 15, 30])
def test_pi2_against_closed_form(pi2, L):
    res = finite_opt.optimize(pi2, L, 10.0)
    s_o, r_o = pi2_oracle(L, 10.0)
    assert res.r_star == pytest.approx(r_o, rel=1e-9)
    assert res.s_star == pytest.approx(s_o, abs=1e-6)


def test_frozen_optima(pi1, pi2, pi3):
    r = finite_opt.optimize(pi2, 10, 10.0)
    assert r.s_star == pytest.approx(0.888332, abs=1e-6)
    assert r.r_star == pytest.approx(0.748868, abs=1e-6)
    assert r.R_star == pytest.approx(7488.68, abs=0.01)
    assert finite_opt.optimize(pi2, 1, 10.0).s_star == pytest.approx(0.1)
    assert finite_opt.optimize(pi2, 5, 10.0).s_star == pytest.approx(0.7)
    assert finite_opt.optimize(pi2, 100, 10.0).regime == "SupSaturated"
    assert finite_opt.optimize(pi1, 10, 10.0).s_star == pytest.approx(0.81939, abs=1e-4)
    assert finite_opt.optimize(pi1, 100, 10.0).regime == "DemandLimited"
    assert finite_opt.optimize(pi3, 10, 10.0).s_star == pytest.approx(0.93969, abs=1e-4)


def test_l1_plateau_resolves_to_smallest(pi2):
    # r(1, s) = r(s) / (1 + 10 s) is exactly 0.1 on [0.1, 0.7]
    grid = np.linspace(0.1, 0.7, 7)
    vals = finite_opt.finite_hit_ratio(pi2, 1, grid, 10.0)
    assert np.allclose(vals, 0.1, atol=1e-12)
    res = finite_opt.optimize(pi2, 1, 10.0)
    assert res.s_star == pytest.approx(0.1) and res.R_star == pytest.approx(1000.0)


@pytest.mark.parametrize("name,L", [("pi1", 10), ("pi1", 30), ("pi3", 10), ("pi2", 10)])
def test_stationarity(request, name, L):
    f = request.getfixturevalue(name)
    res = finite_opt.optimize(f, L, 10.0)
    assert finite_opt.is_stationary(res.residual_left, res.residual_right)
    assert not res.diagnostics


def test_optimum_dominates_grid(pi1):
    for L in (1, 5, 30):
        res = finite_opt.optimize(pi1, L, 10.0)
        _, vals = finite_opt.objective_grid(pi1, L, 10.0)
        assert res.r_star >= vals.max() - 1e-9


def test_c2_scaling(pi2):
    # c2 = 2 halves slots and load; the optimum equals that of L/2 with the same lam s
    a = finite_opt.optimize(pi2, 10, 10.0, c2=2.0)
    f = lambda s: pi2_envelope(s) * (1 - blocking.erlang_b(5, 5.0 * s))  # noqa: E731
    assert a.r_star == pytest.approx(max(f(s) for s in np.linspace(1e-6, 1.1, 20001)), rel=1e-6)


def test_regime_thresholds(pi2):
    th = finite_opt.regime_thresholds(pi2, 10.0)
    assert th["lambda_threshold"] == pytest.approx(0.5)
    e2 = math.e**2
    expected = min(100 * 1.1 / 0.5 + 1, max(math.log(10 * e2 / 1.1) / 2 - math.log(0.5), 10 * 1.1 * e2))
    assert th["L_threshold"] == pytest.approx(expected)
    assert th["L_threshold"] == pytest.approx(81.2796, abs=1e-3)
    assert finite_opt.optimize(pi2, math.ceil(th["L_threshold"]), 10.0).regime == "SupSaturated"


def test_asymptotic_performance(pi2):
    out = finite_opt.asymptotic_performance(pi2, 1, 10.0)
    assert out["large_buffer"]["R"] == pytest.approx(10000.0)
    assert out["small_buffer"]["s"] == pytest.approx(0.1)
    assert out["small_buffer"]["R"] == pytest.approx(2000.0)


def test_slope_sign_changes():
    assert finite_opt.slope_sign_changes([0, 1, 2, 1, 0]) == 1
    assert finite_opt.slope_sign_changes([0, 1, 1, 1, 2]) == 0
    assert finite_opt.slope_sign_changes([0, 1, 0, 1]) == 2


def test_invalid_inputs(pi2):
    with pytest.raises(ValueError):
        finite_opt.optimize(pi2, 0, 10.0)
    with pytest.raises(ValueError):
        finite_opt.finite_hit_ratio(pi2, 5, 2.0, 10.0)


def test_large_buffer_scan_path(pi1):
    res = finite_opt.optimize(pi1, 1500, 10.0)
    assert any("unverified" in d for d in res.diagnostics)
    assert res.r_star == pytest.approx(pi1.r_sup, abs=0.01)
