"""Hit-ratio maximization with a finite buffer of ``L`` slots.

With ``L`` slots an admitted item is lost when the buffer is full, so the
achievable hit ratio at mean caching time ``s`` is

    r(L, s) = r(s) * (1 - B(u L, u lam s)),    u = 1 / max(c2, 1),

where ``r(s)`` is the overall optimal hit-ratio curve.  The objective is
quasi-concave in ``s``; this module finds its maximizer, classifies the
operating regime and verifies the quasi-concavity certificate exactly.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from math import comb, factorial

import numpy as np

from . import allocator, blocking
from .allocator import FlowSpec

log = logging.getLogger(__name__)

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MAX_ITERS = 200
QC_VERIFIED_L = 1000
SCAN_POINTS = 4096


@dataclass
class FiniteOptResult:
    s_star: float
    r_star: float
    R_star: float
    regime: str
    residual_left: float
    residual_right: float
    iterations: int
    diagnostics: list = field(default_factory=list)

    @property
    def residual(self) -> float:
        """Residual of smaller magnitude (equal sides away from kinks)."""
        return min((self.residual_left, self.residual_right), key=abs)

    def to_dict(self):
        return asdict(self)


def _params(flow, lam, c2):
    lam = flow.lam if lam is None else float(lam)
    c2 = flow.c2 if c2 is None else float(c2)
    return lam, c2, blocking.scale_u(c2)


def finite_hit_ratio(flow: FlowSpec, L, s, lam=None, c2=None):
    """``r(s) * (1 - B(u L, u lam s))``."""
    lam, c2, u = _params(flow, lam, c2)
    ss = np.asarray(s, dtype=float)
    if np.any(ss < 0) or np.any(ss > flow.s_sup * (1 + 1e-12)):
        raise ValueError("mean caching time outside [0, s_sup]")
    oc = allocator.overall_cost_rate(flow)
    r = oc.r_of_s(ss)
    b = blocking.erlang_b(u * L, u * lam * ss)
    out = np.asarray(r * (1.0 - b))
    return float(out) if out.ndim == 0 else out


def stationarity_residual(flow: FlowSpec, L, lam, s, c2=None, side="right"):
    """``r'(s) - [u L / (s (1 - B)) - u lam] B r(s)``; zero at smooth interior optima."""
    lam, c2, u = _params(flow, lam, c2)
    oc = allocator.overall_cost_rate(flow)
    b = blocking.erlang_b(u * L, u * lam * s)
    dr = oc.derivative(s, side=side)
    return float(dr - (u * L / (s * (1.0 - b)) - u * lam) * b * oc.r_of_s(s))


def _golden_max(f, a, b, tol):
    """Golden-section search for the maximum of a quasi-concave ``f`` on ``[a, b]``."""
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    it = 0
    best = max((f1, x1), (f2, x2))
    while b - a > tol and it < MAX_ITERS:
        it += 1
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        best = max(best, (f1, x1), (f2, x2))
    return best[1], best[0], it


def _left_edge(f, s_best, v_best, rel=1e-9):
    """Smallest ``s`` whose objective is within ``rel`` of the maximum."""
    thr = v_best * (1.0 - rel)
    lo, hi = 0.0, s_best
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) >= thr:
            hi = mid
        else:
            lo = mid
    return hi


def _right_edge(f, s_best, v_best, s_hi, rel=1e-9):
    thr = v_best * (1.0 - rel)
    if f(s_hi) >= thr:
        return s_hi
    lo, hi = s_best, s_hi
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if f(mid) >= thr:
            lo = mid
        else:
            hi = mid
    return lo


def _snap_to_vertex(flow, f, s_best, v_best, rel=1e-5):
    """Move onto a nearby kink of the overall curve when it is equally good."""
    verts = allocator.overall_cost_rate(flow).s
    k = int(np.argmin(np.abs(verts - s_best)))
    sv = float(verts[k])
    if sv > 0 and abs(sv - s_best) <= rel * max(s_best, 1e-12) and f(sv) >= v_best * (1.0 - 1e-9):
        return sv
    return s_best


def is_stationary(res_left, res_right, tol=1e-6):
    """Zero residual, or a sign change across a kink of the overall curve."""
    return min(abs(res_left), abs(res_right)) <= tol or res_left >= 0 >= res_right


def search_limit(flow: FlowSpec, L, lam=None, c2=None):
    """Upper end of the search interval: ``s_sup`` or, when that is infinite,
    a point past which the objective has decreased on two consecutive doublings."""
    if math.isfinite(flow.s_sup):
        return flow.s_sup
    lam, c2, _ = _params(flow, lam, c2)
    f = lambda s: finite_hit_ratio(flow, L, s, lam, c2)  # noqa: E731
    s = max(1.0, L / lam)
    prev = f(s)
    drops = 0
    for _ in range(80):
        nxt = f(2.0 * s)
        s *= 2.0
        drops = drops + 1 if nxt < prev else 0
        prev = nxt
        if drops >= 2:
            break
    return s


def classify_regime(flow, L, lam, s_star, r_star):
    """``SupSaturated`` when every demand is cached until requested,
    ``DemandLimited`` when the hit ratio is within 2% of ``1 - q``,
    ``BufferLimited`` when ``s*`` is within 15% of ``L / lam``, else ``Interior``."""
    if math.isfinite(flow.s_sup) and s_star >= flow.s_sup * (1.0 - 1e-6):
        return "SupSaturated"
    if r_star >= 0.98 * flow.r_sup:
        return "DemandLimited"
    if abs(s_star * lam / L - 1.0) <= 0.15:
        return "BufferLimited"
    return "Interior"


def optimize(flow: FlowSpec, L, lam=None, c2=None) -> FiniteOptResult:
    """Maximize ``r(L, s)`` over ``s`` in ``(0, s_sup]``.

    Golden-section search is used while quasi-concavity is certified
    (``L <= 1000``); beyond that a dense scan precedes the local search.
    Among (numerically) tied maximizers the smallest ``s`` is returned.
    """
    if L < 1:
        raise ValueError("need at least one buffer slot")
    lam, c2, u = _params(flow, lam, c2)
    f = lambda s: finite_hit_ratio(flow, L, s, lam, c2)  # noqa: E731
    s_hi = search_limit(flow, L, lam, c2)
    diag = []
    if L > QC_VERIFIED_L:
        diag.append("quasi-concavity unverified beyond L=1000; dense scan used")
        log.info("L=%s beyond certified range; scanning %d points", L, SCAN_POINTS)
        grid = np.linspace(0.0, s_hi, SCAN_POINTS)
        vals = finite_hit_ratio(flow, L, grid, lam, c2)
        k = int(np.argmax(vals))
        a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    else:
        a, b = 0.0, s_hi
    s_best, v_best, it = _golden_max(f, a, b, 1e-10 * s_hi)
    v_end = f(s_hi)
    if v_end >= v_best:
        s_best, v_best = s_hi, v_end
    if v_best > 0:
        # a flat top (ties) resolves to its smallest point; a strict peak is kept
        left = _left_edge(f, s_best, v_best)
        right = _right_edge(f, s_best, v_best, s_hi)
        if right - left > 1e-3 * s_hi:
            s_best = left
        s_best = _snap_to_vertex(flow, f, s_best, v_best)
    r_star = f(s_best)
    res_l = stationarity_residual(flow, L, lam, s_best, c2, side="left")
    res_r = stationarity_residual(flow, L, lam, s_best, c2, side="right")
    regime = classify_regime(flow, L, lam, s_best, r_star)
    if regime != "SupSaturated" and not is_stationary(res_l, res_r):
        diag.append("stationarity not bracketed")
    return FiniteOptResult(
        s_star=float(s_best),
        r_star=float(r_star),
        R_star=float(lam * flow.B * r_star),
        regime=regime,
        residual_left=res_l,
        residual_right=res_r,
        iterations=it,
        diagnostics=diag,
    )


def regime_thresholds(flow: FlowSpec, lam, c2=None):
    """Arrival rate below which ``s* = s_sup`` for every ``L``, and the buffer
    size above which ``s* = s_sup`` at rate ``lam``."""
    _, c2, u = _params(flow, lam, c2)
    _, d_end = allocator.endpoint_derivatives(flow)
    s_sup = flow.s_sup
    out = {"lambda_threshold": d_end, "L_threshold": math.inf, "truncated": not math.isfinite(s_sup)}
    if math.isfinite(s_sup) and d_end > 0:
        e2 = math.e**2
        first = lam**2 * s_sup / d_end + 1.0 / u
        second = max(
            math.log(lam * e2 / (u * s_sup)) / (2.0 * u) - math.log(d_end) / u,
            lam * s_sup * e2,
        )
        out["L_threshold"] = min(first, second)
    return out


def asymptotic_performance(flow: FlowSpec, L, lam=None, B=None):
    """Large- and small-buffer predictions of ``(s, r, R)``."""
    lam = flow.lam if lam is None else lam
    B = flow.B if B is None else B
    d0, _ = allocator.endpoint_derivatives(flow)
    demand = flow.r_sup
    return {
        "large_buffer": {"r": demand, "R": lam * B * demand},
        "small_buffer": {"s": L / lam, "r": (L / lam) * d0, "R": L * B * d0},
    }


def slope_sign_changes(values, zero_tol=1e-12):
    """Sign changes of the finite-difference slope, ignoring slopes within ``zero_tol``."""
    d = np.diff(np.asarray(values, dtype=float))
    sg = np.sign(np.where(np.abs(d) <= zero_tol, 0.0, d))
    sg = sg[sg != 0]
    return int(np.sum(sg[1:] != sg[:-1]))


def objective_grid(flow: FlowSpec, L, lam=None, c2=None, n=512):
    """Objective on ``n`` equally spaced points of the search interval."""
    s_hi = search_limit(flow, L, lam, c2)
    grid = np.linspace(0.0, s_hi, n)
    return grid, finite_hit_ratio(flow, L, grid, lam, c2)


# ---------------------------------------------------------------------------
# Quasi-concavity certificate (exact rationals)
# ---------------------------------------------------------------------------


def qc_discriminant(L: int, l: int) -> Fraction:
    """Exact discriminant ``Delta_L(l)`` for ``L >= 6``, ``1 <= l <= L - 5``."""
    if L < 6 or not 1 <= l <= L - 5:
        raise ValueError(f"need L >= 6 and 1 <= l <= L - 5, got L={L}, l={l}")
    total = Fraction(0)
    for i in range(1, L - l):
        total += Fraction(i * (i + 1) - 2 * L, factorial(L - i) * factorial(l + i))
    total += Fraction(2 * (L - l - 1), factorial(L - 1) * factorial(l))
    return total


def qc_coefficients(L: int) -> list:
    """Exact coefficients ``a_0 .. a_{2L-1}`` of the quasi-concavity polynomial."""
    if L < 6:
        raise ValueError("coefficient formula needs L >= 6")
    a = []
    for n in range(2 * L):
        if n == 0:
            a.append(Fraction(L * L - L))
        elif n == 1:
            a.append(Fraction(2 * L * L - 4 * L))
        elif n <= L - 1:
            a.append(Fraction(2**n) * (Fraction(n * n - n, 4) + L * L - (n + 1) * L) / factorial(n))
        elif n == L:
            a.append(Fraction(2 ** (L - 2) * (L - 5) + L + 1, factorial(L - 1)))
        elif n <= 2 * L - 5:
            v = Fraction(0)
            for i in range(n - L + 1, L):
                v += Fraction((n - L - i) * (n - L - i - 1) - 2 * L, factorial(i) * factorial(n - i))
            v += Fraction(4 * L - 2 * n - 2, factorial(L - 1) * factorial(n - L))
            a.append(v)
        elif n == 2 * L - 4:
            a.append(Fraction(2, factorial(L - 1) * factorial(L - 2)))
        else:
            a.append(Fraction(0))
    return a


def _prefix(row):
    out = [0] * len(row)
    acc = 0
    for k, c in enumerate(row):
        acc += c
        out[k] = acc
    return out


def _range_sum(prefix, lo, hi):
    if hi < lo:
        return 0
    hi = min(hi, len(prefix) - 1)
    return prefix[hi] - (prefix[lo - 1] if lo >= 1 else 0)


def _qc_rows(n_lo, n_hi, max_L, collect=None):
    """Scaled discriminants ``(L + l)! * Delta_L(l)`` for ``n = L + l`` in ``[n_lo, n_hi)``.

    With ``k = L - i`` the scaled sum is
    ``sum_{k=l+1}^{L-1} (k^2 - (2L+1)k + L^2 - L) C(n,k) + 2L(L-l-1) C(n,l)``,
    and the moment sums follow from ``k C(n,k) = n C(n-1,k-1)``.
    Returns ``(count, min_sign_witness)`` where the witness is the first negative ``(L, l)``.
    """
    count = 0
    witness = None
    rows = {m: [comb(m, k) for k in range(m + 1)] for m in (n_lo - 2, n_lo - 1)}
    pre = {m: _prefix(r) for m, r in rows.items()}
    for n in range(n_lo, n_hi):
        row = [comb(n, k) for k in range(n + 1)] if n == n_lo else _next_row(rows[n - 1])
        rows[n] = row
        pre[n] = _prefix(row)
        for m in [m for m in rows if m < n - 2]:
            del rows[m], pre[m]
        p0, p1, p2 = pre[n], pre[n - 1], pre[n - 2]
        for L in range((n + 6) // 2, min(n - 1, max_L) + 1):
            l = n - L
            lo, hi = l + 1, L - 1
            s0 = _range_sum(p0, lo, hi)
            s1 = n * _range_sum(p1, lo - 1, hi - 1)
            s2 = n * (n - 1) * _range_sum(p2, lo - 2, hi - 2) + s1
            val = s2 - (2 * L + 1) * s1 + (L * L - L) * s0 + 2 * L * (L - l - 1) * row[l]
            count += 1
            if collect is not None:
                collect[(L, l)] = val
            if val < 0 and witness is None:
                witness = (L, l)
    return count, witness


def qc_scaled_table(max_L: int) -> dict:
    """All scaled discriminants up to ``max_L`` from the prefix-sum sweep."""
    out = {}
    _qc_rows(7, 2 * max_L - 4, max_L, out)
    return out


def _next_row(prev):
    n = len(prev)
    row = [1] * (n + 1)
    for k in range(1, n):
        row[k] = prev[k - 1] + prev[k]
    return row


def qc_discriminant_scaled(L: int, l: int) -> int:
    """``(L + l)! * Delta_L(l)`` through binomial moment sums (integer)."""
    n = L + l
    total = 0
    for k in range(l + 1, L):
        total += (k * k - (2 * L + 1) * k + L * L - L) * comb(n, k)
    return total + 2 * L * (L - l - 1) * comb(n, l)


def qc_verify(max_L: int = QC_VERIFIED_L, workers: int = 1):
    """Check ``Delta_L(l) >= 0`` for all ``6 <= L <= max_L``, ``1 <= l <= L - 5``.

    Returns ``(ok, count, witness)``; ``witness`` is the first ``(L, l)`` with a
    negative discriminant, or ``None``.
    """
    n_lo, n_hi = 7, 2 * max_L - 4
    if n_hi <= n_lo:
        return True, 0, None
    workers = max(1, int(workers))
    cuts = np.linspace(n_lo, n_hi, workers + 1).round().astype(int)
    # balance by work ~ n^2
    if workers > 1:
        w = np.cumsum(np.arange(n_lo, n_hi, dtype=float) ** 2)
        cuts = [n_lo] + [n_lo + int(np.searchsorted(w, w[-1] * k / workers)) for k in range(1, workers)] + [n_hi]
    chunks = [(int(a), int(b), max_L) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]
    if workers == 1:
        results = [_qc_rows(*c) for c in chunks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_qc_rows_star, chunks))
    count = sum(c for c, _ in results)
    witnesses = [w for _, w in results if w is not None]
    witness = min(witnesses) if witnesses else None
    return witness is None, count, witness


def _qc_rows_star(args):
    return _qc_rows(*args)
