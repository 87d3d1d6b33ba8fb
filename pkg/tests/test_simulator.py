import math

import numpy as np
import pytest

from tdcache import allocator, blocking, ratecost, rdi, simulator
from tdcache.allocator import FlowSpec
from tdcache.ratecost import CachePolicy

EXP = FlowSpec(((1.0, rdi.exponential(1.0)),), lam=10.0)


def cfg(flow=EXP, policies=(CachePolicy.deterministic(1.0),), kind="poisson", buffer=None, n=200_000, seed=1, **kw):
    return simulator.SimConfig(flow, policies, simulator.ArrivalProcess(kind, flow.lam), buffer, n, seed, **kw)


@pytest.mark.parametrize("kind,c2", [("poisson", 1.0), ("deterministic", 0.0), ("h2", 2.0)])
def test_arrival_c2(kind, c2):
    arr = simulator.ArrivalProcess(kind, 10.0)
    assert arr.c2 == pytest.approx(c2)
    z = arr.interarrivals(np.random.default_rng(3), 400_000)
    assert z.mean() == pytest.approx(0.1, rel=0.01)
    assert simulator.empirical_c2(z) == pytest.approx(c2, abs=0.05)


def test_h2_phases_scale_with_rate():
    arr = simulator.ArrivalProcess("h2", 20.0)
    w1, mu1, w2, mu2 = arr.phases
    assert (w1, w2) == pytest.approx((1 / 3, 2 / 3))
    assert (mu1, mu2) == pytest.approx((10.0, 40.0))


def test_infinite_buffer_matches_theory():
    rep = simulator.run(cfg())
    r = 1 - math.exp(-1)
    assert rep.blocking_prob == 0.0
    assert abs(rep.hit_ratio - r) < 4 * rep.hit_ratio_se + 1e-3
    assert abs(rep.mean_caching_time - r) < 4 * rep.mean_caching_time_se + 1e-3
    assert rep.mean_occupancy == pytest.approx(10 * r, rel=0.02)
    assert rep.effective_throughput == pytest.approx(10 * EXP.B * r, rel=0.02)


@pytest.mark.parametrize("kind", ["poisson", "deterministic", "h2"])
def test_little_law(kind):
    rep = simulator.run(cfg(kind=kind, buffer=5))
    gap, se = rep.little_gap()
    assert abs(gap) < 4 * se + 0.01 * rep.mean_occupancy


def test_erlang_blocking_with_poisson_arrivals():
    # loss systems with Poisson input are insensitive to the holding-time law
    rep = simulator.run(cfg(buffer=5, n=400_000))
    expected = blocking.erlang_b(5, 10 * (1 - math.exp(-1)))
    assert abs(rep.blocking_prob - expected) < 4 * rep.blocking_prob_se + 2e-3


def test_blocking_ordering_by_burstiness():
    b = {k: simulator.run(cfg(kind=k, buffer=5)).blocking_prob for k in ("deterministic", "poisson", "h2")}
    assert b["deterministic"] < b["poisson"] < b["h2"]


def test_reproducible():
    a = simulator.run(cfg(buffer=3, n=20_000, seed=11, record=True))
    b = simulator.run(cfg(buffer=3, n=20_000, seed=11, record=True))
    assert a.to_dict() == b.to_dict()
    assert np.array_equal(a.caching_times, b.caching_times)
    assert simulator.run(cfg(buffer=3, n=20_000, seed=12)).hit_ratio != a.hit_ratio


def test_censored_when_unread_items_never_expire():
    f = FlowSpec(((1.0, rdi.preset("p6")),), lam=10.0)
    rep = simulator.run(cfg(flow=f, policies=(CachePolicy.deterministic(math.inf),), n=20_000))
    assert rep.censored and math.isinf(rep.mean_occupancy)
    assert rep.hit_ratio == pytest.approx(0.6, abs=0.02)


def test_caching_times_follow_policy_cdf(pi2):
    alloc = allocator.policies_for_cost(pi2, 0.6)
    rep = simulator.run(cfg(flow=pi2, policies=alloc.policies, n=100_000, record=True))
    stats = allocator.policy_stats(pi2, alloc.policies)
    d = simulator.ks_distance(rep.caching_times, stats.cdf)
    assert d < 1.63 / math.sqrt(len(rep.caching_times)) * 1.5
    ecdf = simulator.caching_time_ecdf(rep)
    assert ecdf(1e9) == 1.0 and ecdf(-1.0) == 0.0
    assert abs(rep.hit_ratio - alloc.r) < 4 * rep.hit_ratio_se + 2e-3


def test_replications_and_merge():
    reps = simulator.run_replications(cfg(n=20_000), 4)
    assert len({r.hit_ratio for r in reps}) == 4
    m = simulator.merge_reports(reps)
    assert m["hit_ratio"] == pytest.approx(1 - math.exp(-1), abs=5 * m["hit_ratio_se"] + 2e-3)


def test_ks_distance_handles_atoms():
    cdf = lambda x: np.where(np.asarray(x) >= 1.0, 1.0, 0.0)  # noqa: E731
    assert simulator.ks_distance(np.ones(50), cdf) == 0.0


def test_ecdf_requires_recording():
    with pytest.raises(ValueError):
        simulator.caching_time_ecdf(simulator.run(cfg(n=10_000)))


@pytest.mark.parametrize(
    "kw",
    [
        {"policies": ()},
        {"n": 100},
        {"buffer": 0},
        {"buffer": 2.5},
        {"warmup_fraction": 0.6},
        {"n_batches": 5},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        cfg(**kw)


def test_arrival_validation():
    with pytest.raises(ValueError):
        simulator.ArrivalProcess("weibull", 1.0)
    with pytest.raises(ValueError):
        simulator.ArrivalProcess("poisson", 0.0)
