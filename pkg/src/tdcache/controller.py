"""Online shadow-price adaptation ("arithmetic caching").

The controller only knows the request-delay law of each content class and
what it measures in its own buffer.  It never sees the arrival rate, the
class mix or the arrival variability: those stay inside the environment,
which runs one independent simulation epoch per measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import allocator, ratecost, simulator
from .allocator import FlowSpec
from .ratecost import CachePolicy
from .rdi import RdiSpec

DEFAULT_BAND = 0.05
DEFAULT_WINDOW = 10_000


@dataclass(frozen=True)
class Measurement:
    """Estimates from one epoch: stored bits ``S``, read bits per second ``R``."""

    S: float
    S_se: float
    R: float
    R_se: float
    hit_ratio: float
    n: int


class SimEnvironment:
    """Closed-loop plant: a buffer fed by a hidden flow.

    Only :meth:`measure` and :attr:`class_specs` are meant for controllers.
    """

    def __init__(self, flow: FlowSpec, arrivals: simulator.ArrivalProcess, buffer=None, seed=0, warmup_fraction=0.1):
        self._flow = flow
        self._arrivals = arrivals
        self._buffer = buffer
        self._seeds = np.random.SeedSequence(seed)
        self._warmup = warmup_fraction
        self.epochs = 0

    @property
    def class_specs(self):
        """Request-delay laws of the classes, by class label."""
        return tuple(spec for _, spec in self._flow.classes)

    def measure(self, policies, n_arrivals=DEFAULT_WINDOW) -> Measurement:
        seed = int(self._seeds.spawn(1)[0].generate_state(1)[0])
        cfg = simulator.SimConfig(
            self._flow,
            tuple(policies),
            self._arrivals,
            buffer=self._buffer,
            n_arrivals=int(n_arrivals),
            seed=seed,
            warmup_fraction=self._warmup,
        )
        rep = simulator.run(cfg)
        self.epochs += 1
        B = self._flow.B
        return Measurement(
            S=rep.mean_occupancy * B,
            S_se=rep.mean_occupancy_se * B,
            R=rep.effective_throughput,
            R_se=rep.effective_throughput_se,
            hit_ratio=rep.hit_ratio,
            n=rep.n_arrivals,
        )


@dataclass
class ControllerState:
    beta: float
    delta_beta: float
    window: int
    history: list = field(default_factory=list)
    converged: bool = False
    policies: tuple = ()
    achieved: Measurement | None = None


def class_ratio(curve: ratecost.RateCostCurve, beta: float, band: float = DEFAULT_BAND) -> float:
    """Hit ratio a class targets at price ``beta``.

    With ``band > 0`` each envelope segment of marginal cost ``m`` is filled
    by the fraction of prices in ``beta * [1 - band, 1 + band]`` exceeding
    ``m``, which makes the response continuous in ``beta``.
    """
    if beta <= 0:
        return 0.0
    if band <= 0:
        return allocator.class_response(curve, beta, inclusive=True)
    lo, hi = beta * (1.0 - band), beta * (1.0 + band)
    slopes = curve.slopes
    widths = np.diff(curve.env_r)
    frac = np.clip((hi - slopes) / (hi - lo), 0.0, 1.0)
    r = float(np.sum(widths * frac))
    if frac.size == 0 or frac[-1] >= 1.0:
        if curve.asymptotic:
            grid = np.linspace(lo, hi, 33)
            r = float(np.mean([allocator.class_response(curve, b, True) for b in grid]))
        else:
            r = curve.r_sup
    return min(r, curve.r_sup)


def beta_to_policy(specs, beta: float, band: float = DEFAULT_BAND):
    """Per-class caching policies at shadow price ``beta``, from the class RDIs alone."""
    pols = []
    for spec in specs:
        spec = spec if isinstance(spec, RdiSpec) else spec[1]
        curve = ratecost.build_curve(spec)
        r = class_ratio(curve, beta, band)
        if r <= 0:
            pols.append(CachePolicy.never())
        elif r >= curve.r_sup and not curve.asymptotic:
            pols.append(CachePolicy.deterministic(curve.spec.law.t_sup))
        else:
            pols.append(ratecost.policy_for_target(spec, r, curve))
    return tuple(pols)


def run_infinite(
    target_S: float,
    env: SimEnvironment,
    delta: float = 0.1,
    epochs: int = 50,
    window: int = DEFAULT_WINDOW,
    beta0: float = 1.0,
    tol: float = 0.02,
    band: float = DEFAULT_BAND,
) -> ControllerState:
    """Adapt ``beta`` until the measured stored bits match ``target_S``.

    Update: ``beta <- beta + (1 - S_hat / target_S) * delta * beta``.
    Converged once two consecutive epochs are within ``tol`` of the target.
    """
    specs = env.class_specs
    if target_S <= 0:
        pols = beta_to_policy(specs, 0.0, band)
        m = env.measure(pols, window)
        st = ControllerState(0.0, 0.0, window, [{"epoch": 0, "beta": 0.0, "S_hat": m.S}], True, pols, m)
        return st
    st = ControllerState(beta0, delta * beta0, window)
    beta = beta0
    hits = 0
    for k in range(epochs):
        pols = beta_to_policy(specs, beta, band)
        m = env.measure(pols, window)
        st.history.append({"epoch": k, "beta": beta, "S_hat": m.S, "hit_ratio": m.hit_ratio})
        st.policies, st.achieved, st.beta = pols, m, beta
        err = m.S / target_S - 1.0
        hits = hits + 1 if abs(err) <= tol else 0
        if hits >= 2:
            st.converged = True
            break
        step = delta * beta
        st.delta_beta = step
        beta = max(beta - err * step, 0.5 * beta)
    return st


def _compare(env, specs, band, a, b, window, max_window, z=2.0):
    """Compare measured throughput at prices ``a`` and ``b``.

    Returns ``(sign, ma, mb)`` with sign +1 when ``b`` is significantly
    better, -1 when significantly worse and 0 when unresolved at ``max_window``.
    """
    win = window
    while True:
        ma = env.measure(beta_to_policy(specs, a, band), win)
        mb = env.measure(beta_to_policy(specs, b, band), win)
        gap = mb.R - ma.R
        se = math.hypot(ma.R_se, mb.R_se)
        if abs(gap) > z * se:
            return (1 if gap > 0 else -1), ma, mb
        if win * 2 > max_window:
            return 0, ma, mb
        win *= 2


def run_finite(
    env: SimEnvironment,
    beta0: float = 1.0,
    window: int = 20_000,
    max_window: int = 160_000,
    golden_iters: int = 14,
    k_max: int = 20,
    band: float = DEFAULT_BAND,
) -> ControllerState:
    """Search the price maximizing measured throughput in a finite buffer.

    Phase 1 doubles ``beta`` until the throughput stops increasing
    significantly (halving instead when the very first doubling already
    loses); phase 2 runs a golden-section search on ``log beta`` inside the
    bracket.  The best measured price is returned.
    """
    specs = env.class_specs
    st = ControllerState(beta0, 0.0, window)
    evals: dict = {}

    def note(beta, m, phase):
        evals.setdefault(beta, []).append(m)
        st.history.append({"epoch": len(st.history), "beta": beta, "R_hat": m.R, "phase": phase})

    beta = beta0
    k = 0
    while k < k_max:
        sign, ma, mb = _compare(env, specs, band, beta, 2.0 * beta, window, max_window)
        note(beta, ma, "double")
        note(2.0 * beta, mb, "double")
        if sign > 0:
            beta *= 2.0
            k += 1
        else:
            break
    hi = 2.0 * beta
    if k == 0:
        lo = beta
        for _ in range(k_max):
            sign, ma, mb = _compare(env, specs, band, lo, 0.5 * lo, window, max_window)
            note(lo, ma, "halve")
            note(0.5 * lo, mb, "halve")
            if sign > 0:
                lo *= 0.5
            else:
                break
        lo *= 0.5
    else:
        lo = 0.5 * beta

    a, b = math.log(lo), math.log(hi)
    g = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = b - g * (b - a), a + g * (b - a)

    def R(x):
        m = env.measure(beta_to_policy(specs, math.exp(x), band), window)
        note(math.exp(x), m, "golden")
        return m.R

    f1, f2 = R(x1), R(x2)
    for _ in range(golden_iters):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + g * (b - a)
            f2 = R(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - g * (b - a)
            f1 = R(x1)

    def score(ms):
        return sum(m.R * m.n for m in ms) / sum(m.n for m in ms)

    best = max(evals, key=lambda bb: score(evals[bb]))
    st.beta = best
    st.policies = beta_to_policy(specs, best, band)
    st.achieved = env.measure(st.policies, max_window)
    st.history.append({"epoch": len(st.history), "beta": best, "R_hat": st.achieved.R, "phase": "final"})
    st.converged = True
    return st
