"""Blocking probabilities of loss systems with ``L`` slots.

``erlang_b`` is exact for Poisson arrivals and any caching-time law.  For
other renewal arrivals two approximations are provided: a diffusion
formula driven by the peakedness, and an upper bound that rescales both
the number of slots and the load by ``u = 1 / max(c2, 1)``.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy import integrate, special


def _recurrence(start, l0, n, a):
    """Apply ``B <- a B / (l + a B)`` for ``l = l0 + 1, ..., l0 + n``."""
    b = start
    for k in range(1, n + 1):
        ab = a * b
        b = ab / (l0 + k + ab)
    return b


def _fractional_b(f, a):
    """Continued Erlang-B ``B(f, a)`` for ``0 <= f < 1`` by quadrature.

    ``1 / B(x, a) = a * integral_0^inf exp(-a z) (1 + z)^x dz``.
    """
    if f == 0.0:
        return 1.0
    if a <= 0:
        return 0.0
    # substitute y = a z:  1/B = integral_0^inf exp(-y) (1 + y/a)^f dy
    g = lambda y: math.exp(-y + f * math.log1p(y / a))  # noqa: E731
    val, _ = integrate.quad(g, 0.0, math.inf, epsabs=0.0, epsrel=1e-13, limit=200)
    return 1.0 / val


def erlang_b(L, a):
    """Erlang-B blocking probability for ``L`` slots at offered load ``a``.

    Integer ``L`` uses the stable recurrence; real ``L`` uses the continued
    Erlang-B function (quadrature for the fractional part, then the same
    recurrence).  ``a`` may be an array.
    """
    if L < 0:
        raise ValueError("number of slots must be nonnegative")
    aa = np.asarray(a, dtype=float)
    if np.any(aa < 0):
        raise ValueError("offered load must be nonnegative")
    n = int(math.floor(L))
    f = float(L) - n
    if f < 1e-12:
        out = _recurrence(np.ones_like(aa), 0, n, aa)
    else:
        flat = aa.reshape(-1)
        start = np.array([_fractional_b(f, x) for x in flat]).reshape(aa.shape)
        out = _recurrence(start, f, n, aa)
    out = np.where(aa == 0, 1.0 if L == 0 else 0.0, out)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def erlang_b_direct(L: int, a) -> float:
    """Erlang-B by its defining finite sum, in exact rational arithmetic."""
    if int(L) != L or L < 0:
        raise ValueError("direct sum needs a nonnegative integer L")
    L = int(L)
    a = Fraction(a)
    term = Fraction(1)
    total = Fraction(1)
    for l in range(1, L + 1):
        term = term * a / l
        total += term
    return float(term / total)


def erlang_b_gamma(x, a) -> float:
    """Continued Erlang-B through the regularized upper incomplete gamma function."""
    if a <= 0:
        return 0.0 if x > 0 else 1.0
    log_b = x * math.log(a) - a - special.gammaln(x + 1.0) - math.log(special.gammaincc(x + 1.0, a))
    return math.exp(log_b)


def erlang_b_ds(L, a):
    """``dB/da = B (L / a - 1 + B)`` at fixed ``L``."""
    b = erlang_b(L, a)
    return b * (L / a - 1.0 + b)


def diffusion_blocking(L, a, z):
    """Diffusion approximation ``sqrt(z/a) phi(x) / Phi(x)`` with ``x = (L - a) / sqrt(a z)``."""
    if not z > 0:
        raise ValueError("peakedness must be positive")
    aa = np.asarray(a, dtype=float)
    if np.any(aa <= 0):
        raise ValueError("offered load must be positive")
    x = (L - aa) / np.sqrt(aa * z)
    log_phi = -0.5 * x * x - 0.5 * math.log(2.0 * math.pi)
    out = np.sqrt(z / aa) * np.exp(log_phi - special.log_ndtr(x))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def scale_u(c2: float) -> float:
    return 1.0 / max(c2, 1.0)


def blocking_upper_bound(L, a, c2):
    """``B(u L, u a)`` with ``u = 1 / max(c2, 1)``; exact Erlang-B when ``c2 <= 1``."""
    u = scale_u(c2)
    return erlang_b(u * L, u * np.asarray(a, dtype=float))


def heavy_traffic_blocking(L, a):
    """Heavy-traffic approximation ``1 - L / a``; requires ``a > L``."""
    if not a > L:
        raise ValueError("heavy-traffic approximation needs load above the number of slots")
    return 1.0 - L / a


def peakedness(G, s, c2, check=True):
    """Asymptotic peakedness ``1 + (c2 - 1) / s * integral (1 - G)^2``.

    ``G`` is a caching-time cdf (callable) or an object exposing ``s`` and
    ``sq_integral`` such as :class:`tdcache.allocator.PolicyStats`.
    """
    if hasattr(G, "sq_integral"):
        s_g, sq = G.s, G.sq_integral
    else:
        surv = lambda x: 1.0 - float(G(x))  # noqa: E731
        s_g, _ = integrate.quad(surv, 0.0, math.inf, limit=400, epsabs=1e-12, epsrel=1e-10)
        sq, _ = integrate.quad(lambda x: surv(x) ** 2, 0.0, math.inf, limit=400, epsabs=1e-12, epsrel=1e-10)
    if check and abs(s_g - s) > 1e-6 * max(1.0, abs(s)):
        raise ValueError(f"caching-time law has mean {s_g}, inconsistent with s={s}")
    if s <= 0:
        return 1.0
    return 1.0 + (c2 - 1.0) * sq / s
