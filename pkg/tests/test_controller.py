import math

import numpy as np
import pytest

from tdcache import allocator, controller, finite_opt, presets, ratecost, rdi
from tdcache.ratecost import CachePolicy


def test_beta_to_policy_extremes(pi2):
    specs = [s for _, s in pi2.classes]
    assert all(p == CachePolicy.never() for p in controller.beta_to_policy(specs, 0.0))
    top = controller.beta_to_policy(specs, 1e6)
    for spec, pol in zip(specs, top):
        curve = ratecost.build_curve(spec)
        assert ratecost.hit_ratio(spec, pol.times[-1]) == pytest.approx(curve.r_sup, abs=1e-3)  # heavy tails approach r_sup like 1/sqrt(beta)


def test_exponential_class_under_band():
    # envelope slope 1: prices straddling it give a half-filled segment
    curve = ratecost.build_curve(rdi.exponential(1.0))
    assert controller.class_ratio(curve, 1.0) == pytest.approx(0.5)
    assert controller.class_ratio(curve, 0.9) == 0.0
    assert controller.class_ratio(curve, 1.1) == pytest.approx(1.0)
    assert controller.class_ratio(curve, 1.0, band=0.0) == pytest.approx(1.0)


def test_class_ratio_continuous_and_monotone(pi1):
    for _, spec in pi1.classes:
        curve = ratecost.build_curve(spec)
        # consecutive prices 0.5% apart move at most a few percent of hit ratio
        betas = np.geomspace(1e-2, 1e2, 1850)
        r = np.array([controller.class_ratio(curve, b) for b in betas])
        assert np.all(np.diff(r) >= -1e-9)
        assert np.max(np.diff(r)) < 0.06


def test_environment_hides_flow(pi2):
    env = controller.SimEnvironment(pi2, presets.arrivals("poisson"))
    public = {n for n in dir(env) if not n.startswith("_")}
    assert public == {"class_specs", "measure", "epochs"}
    assert len(env.class_specs) == 10


def test_run_infinite_tracks_target(pi2):
    alloc = allocator.allocate(pi2, 0.7)
    target = pi2.lam * pi2.B * alloc.s
    env = controller.SimEnvironment(pi2, presets.arrivals("poisson"), seed=3)
    st = controller.run_infinite(target, env)
    assert st.converged
    assert st.achieved.S == pytest.approx(target, rel=0.02)
    assert st.achieved.hit_ratio == pytest.approx(0.7, abs=0.03)
    assert env.epochs == len(st.history)


def test_run_infinite_zero_target(pi2):
    env = controller.SimEnvironment(pi2, presets.arrivals("poisson"))
    st = controller.run_infinite(0.0, env)
    assert st.converged and st.beta == 0.0
    assert st.achieved.S == 0.0 and st.achieved.hit_ratio == 0.0


def test_run_infinite_reports_nonconvergence(pi2):
    env = controller.SimEnvironment(pi2, presets.arrivals("poisson"), seed=1)
    st = controller.run_infinite(6000.0, env, epochs=1)
    assert not st.converged and len(st.history) == 1


@pytest.mark.parametrize("name", ["pi1", "pi2"])
def test_run_finite_near_offline_optimum(request, name):
    f = request.getfixturevalue(name)
    offline = finite_opt.optimize(f, 10, f.lam).R_star
    env = controller.SimEnvironment(f, presets.arrivals("poisson"), buffer=10, seed=3)
    st = controller.run_finite(env)
    assert st.converged
    assert st.achieved.R == pytest.approx(offline, rel=0.03)
    phases = {h["phase"] for h in st.history}
    assert {"double", "golden", "final"} <= phases


def test_run_finite_halves_from_high_start(pi2):
    # above beta = 2.1 every class is saturated, so doubling from 4 gains nothing
    env = controller.SimEnvironment(pi2, presets.arrivals("poisson"), buffer=2, seed=5)
    st = controller.run_finite(env, beta0=4.0)
    assert any(h["phase"] == "halve" for h in st.history)
    assert st.beta < 4.0
    assert st.achieved.R == pytest.approx(finite_opt.optimize(pi2, 2, pi2.lam).R_star, rel=0.03)


@pytest.mark.slow
def test_measured_throughput_is_unimodal_in_beta(pi2):
    env = controller.SimEnvironment(pi2, presets.arrivals("poisson"), buffer=10, seed=9)
    specs = env.class_specs
    x = np.linspace(math.log(0.3), math.log(8.0), 15)
    R = np.array([env.measure(controller.beta_to_policy(specs, math.exp(v)), 40_000).R for v in x])
    coef = np.polyfit(x, R, 4)
    fit = np.polyval(coef, x)
    r2 = 1 - np.sum((R - fit) ** 2) / np.sum((R - R.mean()) ** 2)
    assert r2 >= 0.95
