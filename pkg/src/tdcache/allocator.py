"""Joint rate-cost allocation across content classes.

Given class weights ``pi_i`` and per-class envelopes ``s_i(r)``, minimize
``sum pi_i s_i(r_i)`` subject to ``sum pi_i r_i = r``.  The solution
equalizes envelope marginal costs at a shadow price ``beta``.  Sweeping
the target traces the overall convex cost curve ``s*(r)`` whose inverse
is the concave overall hit-ratio curve ``r(s)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import ratecost, rdi
from .ratecost import CachePolicy, RateCostCurve
from .rdi import RdiSpec

BISECT_ITERS = 60
BISECT_TOL = 1e-12
TAIL_POINTS = 96


class InfeasibleTarget(ValueError):
    """Target hit ratio at or beyond the feasible supremum."""


@dataclass(frozen=True)
class FlowSpec:
    """Weighted content classes plus arrival-process summary.

    ``lam`` is the arrival rate (items/s), ``B`` the item size in bits and
    ``c2`` the asymptotic variability of the arrival process.
    """

    classes: tuple  # ((pi, RdiSpec), ...)
    lam: float = 1.0
    B: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        classes = tuple((float(p), s if isinstance(s, RdiSpec) else rdi.spec_from_dict(s)) for p, s in self.classes)
        object.__setattr__(self, "classes", classes)
        if not classes:
            raise ValueError("flow needs at least one class")
        if any(p < 0 for p, _ in classes) or abs(sum(p for p, _ in classes) - 1.0) > 1e-9:
            raise ValueError("class weights must be nonnegative and sum to 1")
        if not self.lam > 0 or not self.B > 0 or self.c2 < 0:
            raise ValueError("need lam > 0, B > 0 and c2 >= 0")

    @property
    def weights(self):
        return np.array([p for p, _ in self.classes])

    @property
    def specs(self):
        return [s for _, s in self.classes]

    def active(self):
        """Indices of classes with positive weight."""
        return [i for i, (p, _) in enumerate(self.classes) if p > 0]

    @property
    def q(self) -> float:
        return float(sum(p * s.law.q for p, s in self.classes))

    @property
    def r_sup(self) -> float:
        return 1.0 - self.q

    @property
    def s_sup(self) -> float:
        total = 0.0
        for p, s in self.classes:
            if p > 0:
                total += p * ratecost.s_sup(s)
        return total

    def with_arrivals(self, lam=None, B=None, c2=None) -> "FlowSpec":
        return FlowSpec(
            self.classes,
            self.lam if lam is None else lam,
            self.B if B is None else B,
            self.c2 if c2 is None else c2,
        )


@dataclass(frozen=True)
class Allocation:
    beta: float
    r_class: tuple
    policies: tuple
    r: float
    s: float

    def to_dict(self):
        return {
            "beta": self.beta,
            "r": self.r,
            "s": self.s,
            "classes": [
                {"r": ri, "policy": pol.to_dict()} for ri, pol in zip(self.r_class, self.policies)
            ],
        }


def curves(flow: FlowSpec, grid: int = ratecost.DEFAULT_GRID):
    return [ratecost.build_curve(s, grid) for _, s in flow.classes]


# ---------------------------------------------------------------------------
# Per-class response to a price
# ---------------------------------------------------------------------------


def _tail_slope(spec: RdiSpec, r):
    """Exact marginal cost ``(1 - r) / p(t)`` beyond the sampled range."""
    t = spec.law.quantile(np.asarray(r) + spec.law.q)
    p = spec.law.pdf(t)
    with np.errstate(divide="ignore"):
        return np.where(p > 0, (1.0 - np.asarray(r)) / p, np.inf)


@lru_cache(maxsize=256)
def _tail_table(spec: RdiSpec, r_max: float, r_sup: float):
    gap = r_sup - r_max
    rr = r_sup - gap * np.logspace(0.0, -12.0, 600)
    slopes = np.maximum.accumulate(_tail_slope(spec, rr))
    return rr, slopes


def _tail_r(curve: RateCostCurve, beta: float) -> float:
    """Hit ratio in the unsampled asymptotic tail where the marginal cost equals ``beta``."""
    rr, slopes = _tail_table(curve.spec, curve.r_max, curve.r_sup)
    if beta <= slopes[0]:
        return float(rr[0])
    if beta >= slopes[-1]:
        return float(rr[-1])
    return float(np.interp(beta, slopes, rr))


def class_response(curve: RateCostCurve, beta: float, inclusive: bool) -> float:
    """Hit ratio of one class at price ``beta``.

    Segments with marginal cost below ``beta`` (or equal, when ``inclusive``)
    are taken in full.  A saturated asymptotic class continues into its tail.
    """
    slopes = curve.slopes
    widths = np.diff(curve.env_r)
    take = slopes <= beta if inclusive else slopes < beta
    r = float(np.sum(widths[take]))
    if curve.asymptotic and take.all():
        return _tail_r(curve, beta)
    if not curve.asymptotic and take.all():
        return curve.r_sup
    return r


def _mass(flow, cvs, idx, beta, inclusive):
    return sum(flow.classes[i][0] * class_response(cvs[i], beta, inclusive) for i in idx)


def feasible_sup(flow: FlowSpec) -> float:
    return flow.r_sup


def allocate(flow: FlowSpec, r_target: float, grid: int = ratecost.DEFAULT_GRID) -> Allocation:
    """Minimum-cost per-class hit ratios reaching the overall target ``r_target``."""
    r_target = float(r_target)
    sup = feasible_sup(flow)
    idx = flow.active()
    asymptotic = any(ratecost.build_curve(flow.classes[i][1], grid).asymptotic for i in idx)
    if r_target < 0 or r_target > sup + 1e-12 or (asymptotic and r_target >= sup):
        raise InfeasibleTarget(f"target hit ratio {r_target} is not below the feasible supremum {sup}")
    cvs = [ratecost.build_curve(s, grid) for _, s in flow.classes]
    n = len(flow.classes)
    if r_target <= 0:
        pols = tuple(CachePolicy.never() for _ in range(n))
        return Allocation(0.0, (0.0,) * n, pols, 0.0, 0.0)

    # bracket: f(lo) < target <= f(hi), f counting segments with slope <= beta
    lo = 0.0
    hi = max(max(cvs[i].slopes.max(initial=0.0), 1e-12) for i in idx)
    if _mass(flow, cvs, idx, lo, True) >= r_target:
        hi = lo = 0.0
    else:
        while _mass(flow, cvs, idx, hi, True) < r_target - 1e-15:
            lo, hi = hi, hi * 2.0
            if hi > 1e300:
                raise InfeasibleTarget(f"target {r_target} not reachable")
        for _ in range(BISECT_ITERS * 20):
            if hi - lo <= BISECT_TOL * max(1.0, hi):
                break
            mid = 0.5 * (lo + hi)
            if _mass(flow, cvs, idx, mid, True) < r_target:
                lo = mid
            else:
                hi = mid

    r_class = [0.0] * n
    base = 0.0
    tied = [0.0] * n
    for i in idx:
        lo_r = class_response(cvs[i], lo, True) if hi > lo else class_response(cvs[i], lo, False)
        hi_r = class_response(cvs[i], hi, True)
        r_class[i] = lo_r
        tied[i] = hi_r - lo_r
        base += flow.classes[i][0] * lo_r
    tied_mass = sum(flow.classes[i][0] * tied[i] for i in idx)
    theta = 0.0 if tied_mass <= 0 else min(max((r_target - base) / tied_mass, 0.0), 1.0)
    for i in idx:
        r_class[i] = min(r_class[i] + theta * tied[i], cvs[i].r_sup)
    return _finish(flow, cvs, hi, r_class)


def _finish(flow, cvs, beta, r_class):
    policies = []
    s_total = 0.0
    r_total = 0.0
    for i, (p, spec) in enumerate(flow.classes):
        ri = r_class[i]
        if p > 0 and ri > 0:
            policies.append(ratecost.policy_for_target(spec, ri, cvs[i]))
            s_total += p * float(cvs[i].envelope(ri))
            r_total += p * ri
        else:
            policies.append(ratecost.policy_for_target(spec, ri, cvs[i]) if ri > 0 else CachePolicy.never())
    return Allocation(float(beta), tuple(float(x) for x in r_class), tuple(policies), r_total, s_total)


def allocate_lp(flow: FlowSpec, r_target: float) -> Allocation:
    """Greedy solution when every class curve is a single chord (``LinearAlpha``).

    Classes are filled in ascending order of their chord slope ``alpha``;
    equal slopes are filled by class index.
    """
    idx = flow.active()
    cvs = [ratecost.build_curve(s) for _, s in flow.classes]
    for i in idx:
        if cvs[i].classification != "LinearAlpha":
            raise ValueError(f"class {i} is {cvs[i].classification}; use allocate() instead")
    sup = feasible_sup(flow)
    if r_target < 0 or r_target > sup + 1e-12:
        raise InfeasibleTarget(f"target hit ratio {r_target} is not below the feasible supremum {sup}")
    order = sorted(idx, key=lambda i: (cvs[i].alpha, i))
    r_class = [0.0] * len(flow.classes)
    remaining = float(r_target)
    beta = 0.0
    for i in order:
        if remaining <= 0:
            break
        p = flow.classes[i][0]
        cap = p * cvs[i].r_sup
        take = min(cap, remaining)
        r_class[i] = take / p
        remaining -= take
        beta = cvs[i].alpha
    return _finish(flow, cvs, beta, r_class)


# ---------------------------------------------------------------------------
# Overall curve
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OverallCurve:
    """Piecewise-linear optimal cost ``s*(r)`` with vertices ``(r, s)``.

    ``r(s)`` is its inverse.  For flows whose cost diverges the vertex list
    is continued into the asymptotic tail and ``asymptotic`` is set.
    """

    r: np.ndarray
    s: np.ndarray
    r_sup: float
    s_sup: float
    asymptotic: bool
    slopes_in_s: np.ndarray = field(repr=False)

    def r_of_s(self, s):
        ss = np.asarray(s, dtype=float)
        out = np.interp(ss, self.s, self.r, right=self.r[-1])
        if self.asymptotic:
            out = np.where(ss > self.s[-1], self.r[-1], out)
        return float(out) if out.ndim == 0 else out

    def s_of_r(self, r):
        rr = np.asarray(r, dtype=float)
        out = np.interp(rr, self.r, self.s)
        out = np.where(rr > self.r[-1] + 1e-15, math.inf, out)
        return float(out) if out.ndim == 0 else out

    def derivative(self, s, side="right"):
        """One-sided derivative ``r'(s)`` of the concave curve."""
        ss = np.asarray(s, dtype=float)
        eps = 1e-12 * np.maximum(1.0, np.abs(ss))
        if side == "right":
            k = np.searchsorted(self.s, ss + eps, side="right") - 1
        else:
            k = np.searchsorted(self.s, ss - eps, side="left") - 1
        k = np.maximum(k, 0)
        n = len(self.slopes_in_s)
        out = np.where(k >= n, 0.0, self.slopes_in_s[np.clip(k, 0, n - 1)])
        out = np.where(ss < 0, self.slopes_in_s[0], out)
        return float(out) if out.ndim == 0 else out

    @property
    def s_end(self) -> float:
        """Largest cost covered by the vertex list."""
        return float(self.s[-1])


def overall_cost_rate(flow: FlowSpec, grid: int = ratecost.DEFAULT_GRID) -> OverallCurve:
    """Optimal overall curve built by merging all class envelope segments by slope."""
    return _overall_cached(flow.classes, int(grid))


@lru_cache(maxsize=64)
def _overall_cached(classes, grid) -> OverallCurve:
    flow = FlowSpec(classes)
    idx = flow.active()
    cvs = {i: ratecost.build_curve(classes[i][1], grid) for i in idx}
    seg_slope, seg_dr, seg_ds = [], [], []
    for i in idx:
        p = classes[i][0]
        c = cvs[i]
        dr = np.diff(c.env_r) * p
        ds = np.diff(c.env_s) * p
        seg_slope.append(c.slopes)
        seg_dr.append(dr)
        seg_ds.append(ds)
    slope = np.concatenate(seg_slope) if seg_slope else np.empty(0)
    dr = np.concatenate(seg_dr) if seg_dr else np.empty(0)
    ds = np.concatenate(seg_ds) if seg_ds else np.empty(0)
    order = np.argsort(slope, kind="stable")
    r = np.concatenate([[0.0], np.cumsum(dr[order])])
    s = np.concatenate([[0.0], np.cumsum(ds[order])])
    asymptotic = any(cvs[i].asymptotic for i in idx)
    if asymptotic:
        # continue past the sampled range by solving the allocation directly
        gaps = (flow.r_sup - r[-1]) * (1.0 - np.logspace(-0.0001, -10, TAIL_POINTS))
        rt, st = [], []
        for g in gaps:
            target = r[-1] + g
            if target >= flow.r_sup:
                continue
            a = allocate(flow, target, grid)
            rt.append(a.r)
            st.append(a.s)
        if rt:
            rt, st = np.asarray(rt), np.maximum.accumulate(np.asarray(st))
            keep = (rt > r[-1]) & (st > s[-1])
            r = np.concatenate([r, rt[keep]])
            s = np.concatenate([s, st[keep]])
    # drop zero-length steps in s so the inverse is well defined
    keep = np.ones(len(s), dtype=bool)
    keep[1:] = np.diff(s) > 1e-15
    keep[-1] = True
    r, s = r[keep], s[keep]
    r = np.maximum.accumulate(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        slopes_in_s = np.diff(r) / np.diff(s)
    slopes_in_s = np.where(np.isfinite(slopes_in_s), slopes_in_s, 0.0)
    slopes_in_s = np.minimum.accumulate(slopes_in_s)
    return OverallCurve(r, s, flow.r_sup, flow.s_sup, asymptotic, slopes_in_s)


def endpoint_derivatives(flow: FlowSpec, grid: int = ratecost.DEFAULT_GRID):
    """``(r'(0), r'(s_sup))``: reciprocal of the smallest initial / largest final class marginal cost."""
    first, last = [], []
    for i in flow.active():
        c = ratecost.build_curve(flow.classes[i][1], grid)
        a, b = c.marginal_cost_range()
        first.append(a)
        last.append(b)
    m0 = min(first)
    m1 = max(last)
    d0 = math.inf if m0 <= 0 else 1.0 / m0
    d1 = 0.0 if math.isinf(m1) else 1.0 / m1
    return d0, d1


def policies_for_cost(flow: FlowSpec, s: float, grid: int = ratecost.DEFAULT_GRID) -> Allocation:
    """Allocation whose optimal overall cost equals ``s``."""
    oc = overall_cost_rate(flow, grid)
    if s >= flow.s_sup:
        r = flow.r_sup if not oc.asymptotic else oc.r_of_s(s)
        if not oc.asymptotic:
            cvs = curves(flow, grid)
            r_class = [cvs[i].r_sup if flow.classes[i][0] > 0 else 0.0 for i in range(len(cvs))]
            return _finish(flow, cvs, math.inf, r_class)
    r = oc.r_of_s(s)
    if oc.asymptotic and r >= flow.r_sup:
        r = np.nextafter(flow.r_sup, 0.0)
    return allocate(flow, r, grid)


# ---------------------------------------------------------------------------
# Statistics of arbitrary probabilistic policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PolicyStats:
    r: float
    s: float
    sq_integral: float
    flow: FlowSpec = field(repr=False)
    policies: tuple = field(repr=False)

    def survival(self, x):
        """``1 - G(x)``: probability a cached-or-not item occupies the buffer longer than ``x``."""
        return _survival(self.flow, self.policies, x)

    def cdf(self, x):
        return 1.0 - self.survival(x)


def _survival(flow, policies, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for (p, spec), pol in zip(flow.classes, policies):
        if p <= 0:
            continue
        law = spec.law
        keep = np.zeros_like(x)
        for t, w in zip(pol.times, pol.weights):
            keep = keep + np.where(t > x, w, 0.0)
        unread = 1.0 + law.q - law.cdf(np.maximum(x, 0.0))
        out = out + p * unread * keep
    return np.where(x < 0, 1.0, out)


def _breakpoints(flow, policies):
    pts = {0.0}
    for (p, spec), pol in zip(flow.classes, policies):
        if p <= 0:
            continue
        pts.update(t for t in pol.times if math.isfinite(t))
        pts.update(rdi.support_breakpoints(spec))
    return sorted(pts)


def _integrate(f, pts, tail):
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            v, _ = integrate.quad(f, a, b, limit=200, epsabs=1e-12, epsrel=1e-10)
            total += v
    if tail:
        v, _ = integrate.quad(f, pts[-1], math.inf, limit=400, epsabs=1e-12, epsrel=1e-10)
        total += v
    return total


def policy_stats(flow: FlowSpec, policies) -> PolicyStats:
    """Hit ratio, mean caching time and ``integral (1 - G)^2`` of a per-class policy."""
    policies = tuple(policies)
    if len(policies) != len(flow.classes):
        raise ValueError("one policy per class is required")
    r = 0.0
    s = 0.0
    tail = False
    for (p, spec), pol in zip(flow.classes, policies):
        if p <= 0:
            continue
        for t, w in zip(pol.times, pol.weights):
            if w <= 0:
                continue
            r += p * w * float(ratecost.hit_ratio(spec, t))
            s += p * w * float(ratecost.mean_caching_time(spec, t))
            if math.isinf(t):
                tail = True
    pts = _breakpoints(flow, policies)
    if math.isinf(s):
        sq = math.inf
    else:
        sq = _integrate(lambda x: float(_survival(flow, policies, x)) ** 2, pts, tail)
    return PolicyStats(r, s, sq, flow, policies)


def survival_integral(flow: FlowSpec, policies) -> float:
    """``integral (1 - G)`` by quadrature; should equal :func:`policy_stats` ``s``."""
    policies = tuple(policies)
    pts = _breakpoints(flow, policies)
    tail = any(math.isinf(t) for pol in policies for t in pol.times)
    return _integrate(lambda x: float(_survival(flow, policies, x)), pts, tail)
