"""Discrete-event simulation of a caching buffer as a loss queue.

Items arrive by a renewal process.  Each arrival draws its class, its
request delay ``X`` and a maximum caching time ``t`` from the class policy.
An admitted item occupies one slot until ``min(X, t)`` if it is requested
(``X >= 0``) and until ``t`` otherwise; it is a hit when ``0 <= X <= t``.
With a finite buffer an arrival that finds every slot busy is dropped.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .allocator import FlowSpec
from .ratecost import CachePolicy

H2_BASE = (1.0 / 3.0, 5.0, 2.0 / 3.0, 20.0)  # weights and rates at rate 10


@dataclass(frozen=True)
class ArrivalProcess:
    """Renewal arrivals with rate ``lam``.

    ``kind`` is ``"poisson"``, ``"deterministic"`` or ``"h2"``.  The default
    two-phase hyperexponential has squared coefficient of variation 2;
    custom phases go in ``h2`` as ``(w1, mu1, w2, mu2)``.
    """

    kind: str = "poisson"
    lam: float = 1.0
    h2: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("poisson", "deterministic", "h2"):
            raise ValueError(f"unknown arrival kind {self.kind!r}")
        if not self.lam > 0:
            raise ValueError("arrival rate must be positive")
        if self.kind == "h2":
            w1, mu1, w2, mu2 = self.phases
            if abs(w1 + w2 - 1.0) > 1e-12 or min(w1, w2) < 0 or min(mu1, mu2) <= 0:
                raise ValueError("invalid hyperexponential phases")
            if abs(w1 / mu1 + w2 / mu2 - 1.0 / self.lam) > 1e-9 / self.lam:
                raise ValueError("hyperexponential mean does not match the arrival rate")

    @property
    def phases(self):
        if self.h2 is not None:
            return tuple(float(v) for v in self.h2)
        w1, mu1, w2, mu2 = H2_BASE
        k = self.lam / 10.0
        return (w1, mu1 * k, w2, mu2 * k)

    @property
    def c2(self) -> float:
        if self.kind == "poisson":
            return 1.0
        if self.kind == "deterministic":
            return 0.0
        w1, mu1, w2, mu2 = self.phases
        m1 = w1 / mu1 + w2 / mu2
        m2 = 2.0 * (w1 / mu1**2 + w2 / mu2**2)
        return m2 / m1**2 - 1.0

    def interarrivals(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "poisson":
            return rng.exponential(1.0 / self.lam, n)
        if self.kind == "deterministic":
            return np.full(n, 1.0 / self.lam)
        w1, mu1, w2, mu2 = self.phases
        first = rng.random(n) < w1
        rates = np.where(first, mu1, mu2)
        return rng.exponential(1.0, n) / rates


def empirical_c2(z) -> float:
    """Squared coefficient of variation of interarrival times."""
    z = np.asarray(z, dtype=float)
    if len(z) < 10_000:
        raise ValueError("at least 10^4 interarrival samples are required")
    m = z.mean()
    return float(z.var(ddof=1) / (m * m))


@dataclass(frozen=True)
class SimConfig:
    flow: FlowSpec
    policies: tuple
    arrivals: ArrivalProcess
    buffer: int | None = None
    n_arrivals: int = 1_000_000
    seed: int = 0
    warmup_fraction: float = 0.1
    n_batches: int = 32
    record: bool = False

    def __post_init__(self):
        object.__setattr__(self, "policies", tuple(self.policies))
        if len(self.policies) != len(self.flow.classes):
            raise ValueError("one policy per class is required")
        if self.n_arrivals < 10_000:
            raise ValueError("n_arrivals must be at least 10^4")
        if not 0 <= self.warmup_fraction < 0.5:
            raise ValueError("warmup fraction must lie in [0, 0.5)")
        if self.buffer is not None and (int(self.buffer) != self.buffer or self.buffer < 1):
            raise ValueError("buffer must be a positive integer or None")
        if self.n_batches < 20:
            raise ValueError("at least 20 batches are required")


@dataclass
class SimReport:
    hit_ratio: float
    hit_ratio_se: float
    blocking_prob: float
    blocking_prob_se: float
    mean_occupancy: float
    mean_occupancy_se: float
    mean_caching_time: float
    mean_caching_time_se: float
    effective_throughput: float
    effective_throughput_se: float
    arrival_rate: float
    empirical_c2: float
    n_arrivals: int
    censored: bool = False
    caching_times: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("caching_times")
        return d

    def little_gap(self):
        """``(occupancy - lam (1 - B) E[W], combined stderr)``."""
        pred = self.arrival_rate * (1.0 - self.blocking_prob) * self.mean_caching_time
        se_pred = self.arrival_rate * math.hypot(
            (1.0 - self.blocking_prob) * self.mean_caching_time_se, self.mean_caching_time * self.blocking_prob_se
        )
        return self.mean_occupancy - pred, math.hypot(self.mean_occupancy_se, se_pred)


def _draw(config: SimConfig, rng: np.random.Generator):
    n = config.n_arrivals
    flow = config.flow
    z = config.arrivals.interarrivals(rng, n)
    tau = np.cumsum(z)
    cls = rng.choice(len(flow.classes), size=n, p=flow.weights / flow.weights.sum())
    x = np.empty(n)
    t = np.empty(n)
    for i, ((_, spec), pol) in enumerate(zip(flow.classes, config.policies)):
        m = cls == i
        k = int(m.sum())
        if k:
            x[m] = spec.law.sample(rng, k)
            t[m] = pol.sample(rng, k)
    cached = t >= 0
    requested = x >= 0
    hit = cached & requested & (x <= t)
    w = np.where(~cached, 0.0, np.where(hit, x, t))
    return z, tau, hit, w


def _admit(tau, w, L):
    """Loss-queue admission; returns a boolean array of blocked arrivals."""
    n = len(tau)
    blocked = np.zeros(n, dtype=bool)
    heap: list = []
    push, pop = heapq.heappush, heapq.heappop
    tau_l = tau.tolist()
    w_l = w.tolist()
    for k in range(n):
        now = tau_l[k]
        while heap and heap[0] <= now:
            pop(heap)
        if len(heap) >= L:
            blocked[k] = True
        elif w_l[k] > 0.0:
            push(heap, now + w_l[k])
    return blocked


def _batch_se(values, nb):
    means = np.array([v.mean() for v in np.array_split(values, nb)])
    return float(values.mean()), float(means.std(ddof=1) / math.sqrt(nb)), means


def _occupancy_batches(tau, w, admitted, edges):
    """Time-average number of occupied slots on each window ``[edges[b], edges[b+1])``."""
    start = tau[admitted]
    end = start + w[admitted]
    out = np.empty(len(edges) - 1)
    for b in range(len(edges) - 1):
        lo, hi = edges[b], edges[b + 1]
        j = np.searchsorted(start, hi)
        s = start[:j]
        e = end[:j]
        ov = np.clip(np.minimum(e, hi) - np.maximum(s, lo), 0.0, None)
        out[b] = ov.sum() / (hi - lo)
    return out


def run(config: SimConfig) -> SimReport:
    """Simulate one run and report batch-means estimates after the warm-up prefix."""
    rng = np.random.default_rng(config.seed)
    z, tau, hit, w = _draw(config, rng)
    n = len(tau)
    if config.buffer is None:
        blocked = np.zeros(n, dtype=bool)
    else:
        blocked = _admit(tau, w, int(config.buffer))
    admitted = ~blocked
    hit = hit & admitted

    n0 = int(config.warmup_fraction * n)
    nb = config.n_batches
    sl = slice(n0, n)
    h_mean, h_se, h_b = _batch_se(hit[sl].astype(float), nb)
    b_mean, b_se, _ = _batch_se(blocked[sl].astype(float), nb)

    w_post = w[sl][admitted[sl]]
    censored = bool(np.isinf(w_post).any())
    if censored:
        wt_mean, wt_se = math.inf, math.nan
    else:
        wt_mean, wt_se, _ = _batch_se(w_post, nb)

    idx_batches = np.array_split(np.arange(n0, n), nb)
    edges = np.array([tau[b[0]] for b in idx_batches] + [tau[-1]])
    if censored:
        occ_mean, occ_se = math.inf, math.nan
    else:
        occ = _occupancy_batches(tau, w, admitted, edges)
        widths = np.diff(edges)
        occ_mean = float(np.sum(occ * widths) / widths.sum())
        occ_se = float(occ.std(ddof=1) / math.sqrt(nb))

    span = tau[-1] - tau[n0]
    lam_emp = (n - n0 - 1) / span
    B = config.flow.B
    rate_b = []
    for b in idx_batches:
        dt = tau[b[-1]] - tau[b[0]]
        rate_b.append(hit[b].sum() / dt if dt > 0 else 0.0)
    R_se = float(B * np.std(rate_b, ddof=1) / math.sqrt(nb))
    report = SimReport(
        hit_ratio=h_mean,
        hit_ratio_se=h_se,
        blocking_prob=b_mean,
        blocking_prob_se=b_se,
        mean_occupancy=occ_mean,
        mean_occupancy_se=occ_se,
        mean_caching_time=wt_mean,
        mean_caching_time_se=wt_se,
        effective_throughput=float(lam_emp * B * h_mean),
        effective_throughput_se=R_se,
        arrival_rate=float(lam_emp),
        empirical_c2=empirical_c2(z[sl]) if n - n0 >= 10_000 else math.nan,
        n_arrivals=n - n0,
        censored=censored,
        caching_times=np.sort(w_post) if config.record else None,
    )
    return report


def caching_time_ecdf(report: SimReport):
    """Empirical caching-time cdf ``x -> F_n(x)`` of admitted items."""
    if report.caching_times is None:
        raise ValueError("run the simulation with record=True to collect caching times")
    data = report.caching_times

    def ecdf(x):
        return np.searchsorted(data, np.asarray(x, dtype=float), side="right") / len(data)

    return ecdf


def ks_distance(samples, cdf) -> float:
    """Kolmogorov-Smirnov distance that handles atoms in the reference cdf."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = len(xs)
    uniq, last = np.unique(xs, return_index=False, return_counts=True)
    upper = np.cumsum(last) / n
    lower = upper - last / n
    f = np.asarray(cdf(uniq), dtype=float)
    f_left = np.asarray(cdf(np.nextafter(uniq, -np.inf)), dtype=float)
    return float(max(np.max(np.abs(upper - f)), np.max(np.abs(lower - f_left))))


def run_replications(config: SimConfig, n_rep: int, workers: int = 1):
    """Independent replications with spawned seeds; returns the list of reports."""
    seeds = np.random.SeedSequence(config.seed).spawn(n_rep)
    configs = [_with_seed(config, int(s.generate_state(1)[0])) for s in seeds]
    if workers <= 1:
        return [run(c) for c in configs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(run, configs))


def _with_seed(config, seed):
    d = {f: getattr(config, f) for f in config.__dataclass_fields__}
    d["seed"] = seed
    return SimConfig(**d)


def merge_reports(reports) -> dict:
    """Inverse-variance weighted means and standard errors of the main estimates."""
    out = {}
    for name in ("hit_ratio", "blocking_prob", "mean_occupancy", "mean_caching_time", "effective_throughput"):
        vals = np.array([getattr(r, name) for r in reports])
        se = np.array([getattr(r, name + "_se") for r in reports])
        if np.all(se > 0) and np.all(np.isfinite(se)):
            wts = 1.0 / se**2
            out[name] = float(np.sum(wts * vals) / wts.sum())
            out[name + "_se"] = float(1.0 / math.sqrt(wts.sum()))
        else:
            out[name] = float(vals.mean())
            out[name + "_se"] = 0.0
    return out


def deterministic_policies(flow: FlowSpec, times) -> tuple:
    return tuple(CachePolicy.deterministic(t) for t in times)
