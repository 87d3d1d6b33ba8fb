import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tdcache import rdi

NAMES = [f"p{i}" for i in range(1, 11)]


def test_preset_moments():
    m = {n: rdi.moments(rdi.preset(n)) for n in NAMES}
    assert m["p1"].q == 0 and m["p1"].nu == pytest.approx(1.0) and math.isinf(m["p1"].t_sup)
    assert m["p2"].nu == pytest.approx(0.5) and m["p2"].t_sup == 1.0
    assert m["p4"].t_inf == 1.0 and math.isinf(m["p4"].nu)
    assert m["p6"].q == pytest.approx(0.4)
    assert m["p8"].t_inf == pytest.approx(1.0) and m["p8"].t_sup == pytest.approx(3.0)
    assert m["p9"].q == pytest.approx(0.6)
    assert m["p10"].q == pytest.approx(0.0)


def test_total_mass_is_one():
    for n in NAMES:
        spec = rdi.preset(n)
        assert rdi.cdf(spec, 1e9) == pytest.approx(1.0, abs=1e-8)
        assert rdi.cdf(spec, -1.0) == pytest.approx(rdi.undemand_prob(spec))


def test_p10_atom():
    spec = rdi.preset("p10")
    atoms = rdi.atoms(spec)
    assert len(atoms) == 1
    z, w = atoms[0]
    assert z == 1.0 and w == pytest.approx(0.2)
    # jump of 0.2 at the atom on top of the thinned arcsine (half of 0.8 below 1)
    assert rdi.cdf(spec, 1.0) - rdi.cdf(spec, 1.0 - 1e-12) == pytest.approx(0.2, abs=1e-6)
    assert rdi.cdf(spec, 1.0) == pytest.approx(0.6)


def test_closed_form_cdfs():
    x = np.linspace(0.0, 2.0, 9)
    assert np.allclose(rdi.cdf(rdi.preset("p1"), x), 1 - np.exp(-x))
    assert np.allclose(rdi.cdf(rdi.preset("p7"), x), np.clip(x / 2, 0, 1))
    arc = 2 / np.pi * np.arcsin(np.sqrt(x / 2))
    assert np.allclose(rdi.cdf(rdi.preset("p5"), x), arc)
    assert np.allclose(rdi.cdf(rdi.preset("p4"), x), np.where(x >= 1, 1 - 1 / np.maximum(x, 1), 0))


@given(st.sampled_from(NAMES), st.floats(0.0, 1.0))
def test_quantile_inverts_cdf(name, u):
    spec = rdi.preset(name)
    q = rdi.undemand_prob(spec)
    z = q + u * (1 - q)
    if z >= 1.0 and math.isinf(spec.law.t_sup):
        return
    t = rdi.quantile(spec, z)
    assert rdi.cdf(spec, t) >= z - 1e-9
    if t > 0:
        assert rdi.cdf(spec, t * (1 - 1e-7) - 1e-12) <= z + 1e-9


@given(st.sampled_from(NAMES), st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_cdf_monotone(name, a, b):
    spec = rdi.preset(name)
    lo, hi = min(a, b), max(a, b)
    assert rdi.cdf(spec, lo) <= rdi.cdf(spec, hi) + 1e-15


@given(st.sampled_from(NAMES), st.floats(0.01, 4.0))
def test_partial_mean_matches_quadrature(name, t):
    from scipy import integrate

    spec = rdi.preset(name)
    pts = [p for p in rdi.support_breakpoints(spec) if 0 < p < t]
    val, _ = integrate.quad(lambda x: x * rdi.pdf(spec, x), 0, t, points=pts or None, limit=200)
    val += sum(z * w for z, w in rdi.atoms(spec) if 0 <= z <= t)
    assert rdi.partial_mean(spec, t) == pytest.approx(val, rel=1e-6, abs=1e-9)


def test_transforms_compose_in_order():
    base = rdi.uniform(0, 1)
    a = base.then(rdi.time_scale(0.5), rdi.time_shift(1.0))
    b = base.then(rdi.time_shift(1.0), rdi.time_scale(0.5))
    assert rdi.moments(a).t_inf == pytest.approx(1.0)
    assert rdi.moments(b).t_inf == pytest.approx(2.0)


def test_density_scale_and_rate_shift():
    s = rdi.exponential(1.0).then(rdi.density_scale(0.5))
    assert rdi.undemand_prob(s) == pytest.approx(0.5)
    s2 = s.then(rdi.rate_shift(0.3, 2.0))
    assert rdi.undemand_prob(s2) == pytest.approx(0.2)
    with pytest.raises(rdi.RdiError):
        s.then(rdi.rate_shift(0.6, 2.0)).law


@pytest.mark.parametrize(
    "bad",
    [
        lambda: rdi.uniform(1.0, 0.5).law,
        lambda: rdi.exponential(-1).law,
        lambda: rdi.pareto(0.0, 1.0).law,
        lambda: rdi.exponential(1).then(rdi.density_scale(1.5)).law,
        lambda: rdi.exponential(1).then(rdi.time_scale(0.0)).law,
        lambda: rdi.preset("p11"),
    ],
)
def test_invalid_parameters_raise(bad):
    with pytest.raises(rdi.RdiError):
        bad()


def test_quantile_domain():
    spec = rdi.preset("p6")
    with pytest.raises(rdi.RdiError):
        rdi.quantile(spec, 0.1)
    with pytest.raises(rdi.RdiError):
        rdi.quantile(spec, 1.5)


@pytest.mark.parametrize("name", NAMES)
def test_json_round_trip(name):
    spec = rdi.preset(name)
    back = rdi.spec_from_dict(rdi.spec_to_dict(spec))
    x = np.linspace(0, 4, 41)
    assert np.allclose(rdi.cdf(back, x), rdi.cdf(spec, x), atol=0, rtol=0)
    assert rdi.spec_from_dict(name) == spec


@pytest.mark.parametrize("name", ["p2", "p6", "p10"])
def test_sampling_matches_cdf(name):
    spec = rdi.preset(name)
    rng = np.random.default_rng(7)
    x = rdi.sample_request_delay(spec, rng, 200_000)
    never = np.isinf(x)
    assert never.mean() == pytest.approx(rdi.undemand_prob(spec), abs=0.005)
    for t in (0.25, 0.5, 1.0, 1.5):
        emp = np.mean(~never & (x <= t))
        assert emp == pytest.approx(rdi.cdf(spec, t) - rdi.undemand_prob(spec), abs=0.005)
