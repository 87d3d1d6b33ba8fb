"""Static caching rate-cost curves and their lower convex envelopes.

A static policy caches every item of a class for at most ``t`` seconds.
Its hit ratio is ``cdf(t) - q`` and its mean caching time (normalized
storage cost) is ``E[min(X, t); X >= 0] + t * P(X > t or never)``.
Sweeping ``t`` traces the rate-cost curve ``s(r)``; randomizing between
static policies reaches its lower convex envelope.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import rdi
from .rdi import RdiSpec

DEFAULT_GRID = 2048
TRUNCATION_GAP = 1e-4
REFINE_TOL = 1e-6


class InfeasibleHitRatio(ValueError):
    """Requested hit ratio exceeds the demand probability ``1 - q``."""


class SingularPoint(ValueError):
    """Density vanishes where a curvature was requested."""


# ---------------------------------------------------------------------------
# Static policies
# ---------------------------------------------------------------------------


def hit_ratio(spec: RdiSpec, t):
    """Probability that an item cached for ``t`` seconds is read from the buffer."""
    law = spec.law
    tt = np.asarray(t, dtype=float)
    out = np.where(tt < 0, 0.0, law.cdf(np.maximum(tt, 0.0)) - law.q)
    return rdi._out(np.maximum(out, 0.0), t)


def mean_caching_time(spec: RdiSpec, t):
    """Mean buffer residence of an item whose maximum caching time is ``t``."""
    law = spec.law
    tt = np.maximum(np.asarray(t, dtype=float), 0.0)
    surv = np.maximum(1.0 + law.q - law.cdf(tt), 0.0)
    with np.errstate(invalid="ignore"):
        tail = np.where(surv > 0, tt * surv, 0.0)
    pm = law.partial_mean(tt)
    return rdi._out(pm + tail, t)


def s_sup(spec: RdiSpec) -> float:
    """Cost of caching every item until it is requested (``nu + q * t_sup``)."""
    m = rdi.moments(spec)
    tail = 0.0 if m.q == 0 else m.q * m.t_sup
    return m.nu + tail


def _check_r(spec, r):
    rr = np.asarray(r, dtype=float)
    r_sup = 1.0 - spec.law.q
    if np.any(rr > r_sup + 1e-12):
        raise InfeasibleHitRatio(f"hit ratio {np.max(rr)} exceeds demand probability {r_sup}")
    if np.any(rr < 0):
        raise InfeasibleHitRatio("hit ratio must be nonnegative")
    return np.clip(rr, 0.0, r_sup)


def time_for_ratio(spec: RdiSpec, r):
    """Smallest maximum caching time reaching hit ratio ``r``."""
    rr = _check_r(spec, r)
    return rdi._out(spec.law.quantile(rr + spec.law.q), r)


def rate_cost(spec: RdiSpec, r):
    """Normalized storage cost ``s(r)`` of the cheapest static policy with hit ratio ``r``."""
    rr = _check_r(spec, r)
    t = spec.law.quantile(rr + spec.law.q)
    s = mean_caching_time(spec, t)
    return rdi._out(np.where(rr == 0, 0.0, s), r)


def rate_cost_closed_form(family: str, params, r):
    """Closed-form ``s(r)`` for the five continuous base families."""
    r = np.asarray(r, dtype=float)
    if family == "exponential":
        (rate,) = params
        if not rate > 0:
            raise rdi.RdiError("exponential rate must be positive")
        out = r / rate
    elif family == "uniform":
        lo, hi = params
        if not 0 <= lo < hi:
            raise rdi.RdiError("uniform needs 0 <= lo < hi")
        w = hi - lo
        out = -0.5 * w * r**2 + w * r + lo
    elif family == "triangular":
        lo, hi, mode = params
        if not (0 <= lo <= mode <= hi and lo < hi):
            raise rdi.RdiError("triangular needs 0 <= lo <= mode <= hi")
        h_left = (hi - lo) * (mode - lo)
        h_right = (hi - lo) * (hi - mode)
        split = (mode - lo) / (hi - lo)
        left = math.sqrt(h_left) * (np.sqrt(r) - np.sqrt(r) ** 3 / 3.0) + lo
        right = (lo + hi + mode) / 3.0 - math.sqrt(h_right) * np.sqrt(np.maximum(1.0 - r, 0.0)) ** 3 / 3.0
        out = np.where(r <= split, left, right)
    elif family == "pareto":
        shape, scale = params
        if not (shape > 0 and scale > 0):
            raise rdi.RdiError("pareto needs positive parameters")
        with np.errstate(divide="ignore"):
            if shape == 1.0:
                out = scale * np.log(1.0 / (1.0 - r)) + scale
            else:
                c = scale / (1.0 - shape)
                out = c * (1.0 - r) ** ((shape - 1.0) / shape) - c + scale
    elif family == "arcsine":
        (width,) = params
        if not width > 0:
            raise rdi.RdiError("arcsine width must be positive")
        out = width * ((1.0 - r) * np.sin(0.5 * math.pi * r) ** 2 + 0.5 * r - np.sin(math.pi * r) / (2.0 * math.pi))
    else:
        raise rdi.RdiError(f"no closed form for family {family!r}")
    return float(out) if out.ndim == 0 else out


def curvature(spec: RdiSpec, r):
    """Second derivative ``s''(r) = -(p^2 + (1 - r) p') / p^3`` at ``t = quantile(r + q)``."""
    rr = _check_r(spec, r)
    t = spec.law.quantile(rr + spec.law.q)
    p = spec.law.pdf(t)
    if np.any(p <= 0):
        raise SingularPoint("density vanishes at the requested hit ratio")
    dp = spec.law.dpdf(t)
    return rdi._out(-(p**2 + (1.0 - rr) * dp) / p**3, r)


# ---------------------------------------------------------------------------
# Curves and envelopes
# ---------------------------------------------------------------------------


def lower_hull(x, y, rel_tol=1e-10):
    """Indices of the lower convex hull of points sorted by ``x``; collinear points dropped."""
    idx: list[int] = []
    for i in range(len(x)):
        while len(idx) >= 2:
            o, a = idx[-2], idx[-1]
            dx1, dy1 = x[a] - x[o], y[a] - y[o]
            dx2, dy2 = x[i] - x[o], y[i] - y[o]
            cross = dx1 * dy2 - dy1 * dx2
            if cross <= rel_tol * math.hypot(dx1, dy1) * math.hypot(dx2, dy2):
                idx.pop()
            else:
                break
        idx.append(i)
    return np.asarray(idx, dtype=int)


@dataclass(frozen=True, eq=False)
class CachePolicy:
    """Distribution of the maximum caching time of one class.

    ``times[k]`` is chosen with probability ``weights[k]``; with probability
    ``skip`` the item is not cached at all.  ``inf`` means cache until requested.
    """

    times: tuple = ()
    weights: tuple = ()
    skip: float = 0.0

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        weights = tuple(float(w) for w in self.weights)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "skip", float(self.skip))
        if len(times) != len(weights):
            raise ValueError("times and weights differ in length")
        if any(t < 0 or math.isnan(t) for t in times):
            raise ValueError("caching times must be nonnegative")
        if len(set(times)) != len(times):
            raise ValueError("caching times must be distinct")
        if self.skip < -1e-12 or any(w < -1e-12 for w in weights):
            raise ValueError("policy weights must be nonnegative")
        if abs(self.skip + sum(weights) - 1.0) > 1e-9:
            raise ValueError("policy weights must sum to 1")

    @classmethod
    def deterministic(cls, t):
        return cls((t,), (1.0,), 0.0)

    @classmethod
    def never(cls):
        return cls((), (), 1.0)

    def __eq__(self, other):
        if not isinstance(other, CachePolicy):
            return NotImplemented
        return (self.times, self.weights, self.skip) == (other.times, other.weights, other.skip)

    def __hash__(self):
        return hash((self.times, self.weights, self.skip))

    def sample(self, rng: np.random.Generator, size):
        """Draw caching times; ``-inf`` marks a skipped (never cached) item."""
        vals = np.array((-math.inf,) + self.times)
        probs = np.clip(np.array((self.skip,) + self.weights), 0.0, None)
        return vals[rng.choice(len(vals), size=size, p=probs / probs.sum())]

    def to_dict(self):
        return {
            "skip": self.skip,
            "atoms": [{"t": ("inf" if math.isinf(t) else t), "weight": w} for t, w in zip(self.times, self.weights)],
        }

    @classmethod
    def from_dict(cls, data):
        atoms = data.get("atoms", [])
        times = tuple(math.inf if a["t"] in ("inf", "Infinity") else float(a["t"]) for a in atoms)
        return cls(times, tuple(a["weight"] for a in atoms), data.get("skip", 0.0))


@dataclass(frozen=True, eq=False)
class RateCostCurve:
    """Sampled rate-cost curve of one class together with its lower convex envelope.

    ``r, s, t`` are the samples (hit ratio, cost, caching time), each
    exactly achieved by the static policy ``t``.  ``env_idx`` indexes the
    envelope vertices into the sample arrays; the first vertex is the origin.
    """

    spec: RdiSpec
    r: np.ndarray
    s: np.ndarray
    t: np.ndarray
    env_idx: np.ndarray
    r_sup: float
    s_sup: float
    classification: str
    asymptotic: bool

    @property
    def env_r(self):
        return self.r[self.env_idx]

    @property
    def env_s(self):
        return self.s[self.env_idx]

    @property
    def env_t(self):
        return self.t[self.env_idx]

    @property
    def r_max(self) -> float:
        """Largest sampled hit ratio (``r_sup`` unless the cost diverges)."""
        return float(self.r[-1])

    @property
    def slopes(self):
        """Marginal cost of each envelope segment, nondecreasing."""
        return np.diff(self.env_s) / np.diff(self.env_r)

    @property
    def alpha(self) -> float:
        """Slope of the single chord for ``LinearAlpha`` curves, else the first slope."""
        return float(self.slopes[0]) if len(self.env_idx) > 1 else math.inf

    def envelope(self, r):
        """Envelope value, tightened by the exact curve where that is lower."""
        rr = np.asarray(r, dtype=float)
        hull = np.interp(rr, self.env_r, self.env_s)
        inside = rr <= self.r_max
        exact = rate_cost(self.spec, np.clip(rr, 0.0, self.r_sup))
        out = np.where(inside, np.minimum(hull, exact), exact)
        return float(out) if out.ndim == 0 else out

    def hull(self, r):
        """Piecewise-linear envelope through the hull vertices."""
        out = np.interp(np.asarray(r, dtype=float), self.env_r, self.env_s)
        return float(out) if out.ndim == 0 else out

    def marginal_cost_range(self):
        """``(initial, final)`` envelope marginal costs."""
        sl = self.slopes
        if len(sl) == 0:
            return math.inf, math.inf
        return float(sl[0]), (math.inf if self.asymptotic else float(sl[-1]))

    def to_rows(self):
        env = self.hull(self.r)
        return [(float(a), float(b), float(c), self.classification) for a, b, c in zip(self.r, self.s, env)]


def _evaluate(spec, r):
    """Static samples reached from the target ratios ``r``: ``(r_exact, s, t)``."""
    law = spec.law
    t = law.quantile(np.clip(r + law.q, law.q, 1.0))
    t = np.where(r <= 0, 0.0, t)
    rr = np.where(r <= 0, 0.0, np.maximum(law.cdf(t) - law.q, 0.0))
    ss = np.where(r <= 0, 0.0, mean_caching_time(spec, t))
    return rr, ss, t


def _merge(parts):
    r = np.concatenate([p[0] for p in parts])
    s = np.concatenate([p[1] for p in parts])
    t = np.concatenate([p[2] for p in parts])
    order = np.lexsort((t, r))
    r, s, t = r[order], s[order], t[order]
    keep = np.ones(len(r), dtype=bool)
    keep[1:] = np.diff(r) > 0
    return r[keep], s[keep], t[keep]


def _densify(r, s, r_max, s_scale, max_angle=0.01, max_new=4096):
    """Midpoints of segments around sharp turns of the normalized polyline."""
    x = r / r_max
    y = s / s_scale
    ang = np.arctan2(np.diff(y), np.diff(x))
    turn = np.abs(np.diff(ang))
    bad = np.nonzero(turn > max_angle)[0]
    if len(bad) == 0:
        return np.empty(0)
    seg = np.unique(np.concatenate([bad, bad + 1]))
    seg = seg[(r[seg + 1] - r[seg]) > 1e-12]
    if len(seg) > max_new:
        seg = seg[np.argsort(-np.maximum(turn[np.minimum(seg, len(turn) - 1)], 0))[:max_new]]
    return 0.5 * (r[seg] + r[seg + 1])


def _tangent_points(r, env_idx):
    """Envelope vertices where the hull leaves or rejoins the sampled curve."""
    out = []
    for k, i in enumerate(env_idx):
        if i == 0:
            continue
        prev_gap = k > 0 and env_idx[k - 1] != i - 1
        next_gap = k + 1 < len(env_idx) and env_idx[k + 1] != i + 1
        if prev_gap or next_gap:
            out.append(i)
    return out


def _classify(r, s, env_idx, r_sup, s_sup_v, asymptotic):
    if not asymptotic and len(env_idx) == 2 and math.isfinite(s_sup_v) and abs(r[-1] - r_sup) < 1e-12:
        return "LinearAlpha"
    hull = np.interp(r, r[env_idx], s[env_idx])
    if np.all(s - hull <= 1e-9 * (1.0 + np.abs(s))):
        return "SelfConvex"
    return "General"


def build_curve(spec: RdiSpec, grid: int = DEFAULT_GRID) -> RateCostCurve:
    """Sample ``s(r)`` adaptively and compute its lower convex envelope."""
    return _build_curve_cached(spec, int(grid))


@lru_cache(maxsize=256)
def _build_curve_cached(spec: RdiSpec, grid: int) -> RateCostCurve:
    law = spec.law
    r_sup = 1.0 - law.q
    s_sup_v = s_sup(spec)
    asymptotic = not math.isfinite(s_sup_v)
    if r_sup <= 0:
        zero = np.zeros(1)
        return RateCostCurve(spec, zero, zero, zero, np.zeros(1, dtype=int), 0.0, 0.0, "LinearAlpha", False)
    r_max = r_sup - TRUNCATION_GAP if asymptotic else r_sup

    targets = [np.linspace(0.0, r_max, grid)]
    targets.append(r_max * np.logspace(-9, -3, 64))
    if asymptotic:
        targets.append(r_max - r_max * np.logspace(-6, -1, 64))
    # hit ratios at support breakpoints and on both sides of atoms
    for b in rdi.support_breakpoints(spec):
        lo = float(law.cdf(np.nextafter(b, -np.inf))) - law.q if b > 0 else 0.0
        hi = float(law.cdf(b)) - law.q
        targets.append(np.clip(np.array([lo, hi]), 0.0, r_max))
    # uniform in time so that slowly-changing cdf regions are sampled too
    t_end = float(law.quantile(np.array(r_max + law.q)))
    if math.isfinite(t_end) and t_end > 0:
        tt = np.linspace(0.0, t_end, grid)
        targets.append(np.clip(law.cdf(tt) - law.q, 0.0, r_max))
    parts = [_evaluate(spec, np.unique(np.concatenate(targets)))]
    r, s, t = _merge(parts)

    s_scale = max(float(s[-1]), 1e-12)
    for _ in range(4):
        extra = _densify(r, s, r_max, s_scale)
        if len(extra) == 0:
            break
        parts.append(_evaluate(spec, extra))
        r, s, t = _merge(parts)

    env = lower_hull(r, s)
    for _ in range(30):
        tp = _tangent_points(r, env)
        extra = []
        for i in tp:
            if i > 0 and r[i] - r[i - 1] > 1e-13:
                extra.append(0.5 * (r[i - 1] + r[i]))
            if i + 1 < len(r) and r[i + 1] - r[i] > 1e-13:
                extra.append(0.5 * (r[i] + r[i + 1]))
        if not extra:
            break
        old_r, old_hull = r, np.interp(r, r[env], s[env])
        parts.append(_evaluate(spec, np.asarray(extra)))
        r, s, t = _merge(parts)
        env = lower_hull(r, s)
        change = np.max(np.abs(np.interp(old_r, r[env], s[env]) - old_hull))
        if change < REFINE_TOL * 1e-2:
            break

    cls = _classify(r, s, env, r_sup, s_sup_v, asymptotic)
    return RateCostCurve(spec, r, s, t, env, r_sup, s_sup_v, cls, asymptotic)


def convex_envelope(curve_or_spec, grid: int = DEFAULT_GRID) -> RateCostCurve:
    """Lower convex envelope of a curve (or of the curve of a spec)."""
    if isinstance(curve_or_spec, RdiSpec):
        return build_curve(curve_or_spec, grid)
    c = curve_or_spec
    env = lower_hull(c.r, c.s)
    cls = _classify(c.r, c.s, env, c.r_sup, c.s_sup, c.asymptotic)
    return RateCostCurve(c.spec, c.r, c.s, c.t, env, c.r_sup, c.s_sup, cls, c.asymptotic)


def policy_for_target(spec: RdiSpec, r_target: float, curve: RateCostCurve | None = None) -> CachePolicy:
    """Cheapest (possibly randomized) policy with hit ratio ``r_target``.

    A deterministic caching time is returned where the static curve meets
    the envelope; otherwise the policy time-shares the two bracketing
    envelope vertices, with the origin vertex meaning "do not cache".
    """
    curve = curve or build_curve(spec)
    r_target = float(_check_r(spec, r_target))
    if r_target <= 0:
        return CachePolicy.never()
    if r_target > curve.r_max:
        return CachePolicy.deterministic(float(time_for_ratio(spec, r_target)))
    er, es, et = curve.env_r, curve.env_s, curve.env_t
    k = int(np.searchsorted(er, r_target, side="left"))
    if k < len(er) and abs(er[k] - r_target) <= 1e-13:
        return CachePolicy.deterministic(float(et[k])) if k > 0 else CachePolicy.never()
    exact = float(rate_cost(spec, r_target))
    hull = float(np.interp(r_target, er, es))
    if exact <= hull * (1.0 + 1e-12) + 1e-15:
        return CachePolicy.deterministic(float(time_for_ratio(spec, r_target)))
    lo, hi = k - 1, k
    theta = (er[hi] - r_target) / (er[hi] - er[lo])
    if lo == 0:
        return CachePolicy((float(et[hi]),), (1.0 - theta,), theta)
    return CachePolicy((float(et[lo]), float(et[hi])), (theta, 1.0 - theta), 0.0)


def write_curve_csv(curve: RateCostCurve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "s_static", "s_envelope", "classification"])
        for row in curve.to_rows():
            w.writerow([repr(row[0]), repr(row[1]), repr(row[2]), row[3]])
