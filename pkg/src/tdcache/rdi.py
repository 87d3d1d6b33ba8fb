"""Request-delay (RDI) distributions.

An RDI describes when, after an item is broadcast, the user asks for it.
The law lives on ``[0, inf)`` plus an atom of mass ``q`` at "never"
(represented as ``-inf`` in samples).  Five continuous base families are
supported together with point masses, finite mixtures, and four
transforms:

``time_scale(xi)``      cdf_new(x) = cdf(xi * x)
``time_shift(xi)``      cdf_new(x) = cdf(x - xi)
``density_scale(xi)``   keep a fraction ``xi`` of the demand, move the rest to "never"
``rate_shift(xi, z)``   move mass ``xi`` from "never" to an atom at ``z``

Every spec is reduced at construction to a canonical law: a list of affine
images of base families, a list of atoms and the undemand mass ``q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Union

import numpy as np

NEVER = -math.inf

_MASS_TOL = 1e-12


class RdiError(ValueError):
    """Invalid distribution parameters or transform preconditions."""


# ---------------------------------------------------------------------------
# Base families on the standardized variable y.  All methods are vectorized.
# ---------------------------------------------------------------------------


class _Exponential:
    def __init__(self, rate):
        if not rate > 0:
            raise RdiError(f"exponential rate must be positive, got {rate}")
        self.rate = float(rate)
        self.lower = 0.0
        self.upper = math.inf
        self.mean = 1.0 / self.rate

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(y >= 0, self.rate * np.exp(-self.rate * np.maximum(y, 0.0)), 0.0)

    def dpdf(self, y):
        return -self.rate * self.pdf(y)

    def cdf(self, y):
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        return -np.expm1(-self.rate * y)

    def ppf(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        with np.errstate(divide="ignore"):
            return -np.log1p(-z) / self.rate

    def partial_mean(self, y):
        y = np.maximum(np.asarray(y, dtype=float), 0.0)
        x = self.rate * y
        with np.errstate(invalid="ignore"):
            tail = np.where(np.isinf(x), 0.0, x * np.exp(-x))
        return (-np.expm1(-x) - tail) / self.rate


class _Uniform:
    def __init__(self, lo, hi):
        if not (0 <= lo < hi):
            raise RdiError(f"uniform needs 0 <= lo < hi, got ({lo}, {hi})")
        self.lo, self.hi = float(lo), float(hi)
        self.lower, self.upper = self.lo, self.hi
        self.mean = 0.5 * (self.lo + self.hi)

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.where((y >= self.lo) & (y <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def dpdf(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def cdf(self, y):
        y = np.asarray(y, dtype=float)
        return np.clip((y - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def ppf(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        return self.lo + z * (self.hi - self.lo)

    def partial_mean(self, y):
        y = np.clip(np.asarray(y, dtype=float), self.lo, self.hi)
        return (y * y - self.lo * self.lo) / (2.0 * (self.hi - self.lo))


class _Triangular:
    """Triangular law with support ``[lo, hi]`` and peak at ``mode``."""

    def __init__(self, lo, hi, mode):
        if not (0 <= lo <= mode <= hi and lo < hi):
            raise RdiError(f"triangular needs 0 <= lo <= mode <= hi, lo < hi; got ({lo}, {hi}, {mode})")
        self.lo, self.hi, self.mode = float(lo), float(hi), float(mode)
        self.lower, self.upper = self.lo, self.hi
        self.h_left = (self.hi - self.lo) * (self.mode - self.lo)
        self.h_right = (self.hi - self.lo) * (self.hi - self.mode)
        self.split = (self.mode - self.lo) / (self.hi - self.lo)
        self.mean = (self.lo + self.hi + self.mode) / 3.0

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        if self.h_left > 0:
            m = (y >= self.lo) & (y <= self.mode)
            out = np.where(m, 2.0 * (y - self.lo) / self.h_left, out)
        if self.h_right > 0:
            m = (y > self.mode) & (y <= self.hi)
            out = np.where(m, 2.0 * (self.hi - y) / self.h_right, out)
        return out

    def dpdf(self, y):
        y = np.asarray(y, dtype=float)
        out = np.zeros_like(y)
        if self.h_left > 0:
            out = np.where((y >= self.lo) & (y < self.mode), 2.0 / self.h_left, out)
        if self.h_right > 0:
            out = np.where((y > self.mode) & (y <= self.hi), -2.0 / self.h_right, out)
        return out

    def cdf(self, y):
        y = np.clip(np.asarray(y, dtype=float), self.lo, self.hi)
        left = (y - self.lo) ** 2 / self.h_left if self.h_left > 0 else np.zeros_like(y)
        right = 1.0 - (self.hi - y) ** 2 / self.h_right if self.h_right > 0 else np.ones_like(y)
        return np.where(y <= self.mode, left, right)

    def ppf(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        left = self.lo + np.sqrt(z * self.h_left)
        right = self.hi - np.sqrt((1.0 - z) * self.h_right)
        return np.where(z <= self.split, left, right)

    def partial_mean(self, y):
        y = np.clip(np.asarray(y, dtype=float), self.lo, self.hi)
        lo, hi = self.lo, self.hi
        if self.h_left > 0:
            left = (2.0 / self.h_left) * ((y**3 - lo**3) / 3.0 - lo * (y**2 - lo**2) / 2.0)
        else:
            left = np.zeros_like(y)
        if self.h_right > 0:
            tail = (2.0 / self.h_right) * (hi * (hi**2 - y**2) / 2.0 - (hi**3 - y**3) / 3.0)
            right = self.mean - tail
        else:
            right = np.full_like(y, self.mean)
        return np.where(y <= self.mode, left, right)


class _Pareto:
    """Pareto law ``shape * scale**shape / y**(shape + 1)`` on ``[scale, inf)``."""

    def __init__(self, shape, scale):
        if not (shape > 0 and scale > 0):
            raise RdiError(f"pareto needs shape > 0 and scale > 0, got ({shape}, {scale})")
        self.shape, self.scale = float(shape), float(scale)
        self.lower, self.upper = self.scale, math.inf
        self.mean = self.shape * self.scale / (self.shape - 1.0) if self.shape > 1 else math.inf

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        ys = np.maximum(y, self.scale)
        return np.where(y >= self.scale, self.shape * self.scale**self.shape / ys ** (self.shape + 1), 0.0)

    def dpdf(self, y):
        y = np.asarray(y, dtype=float)
        ys = np.maximum(y, self.scale)
        return np.where(y >= self.scale, -(self.shape + 1) * self.pdf(ys) / ys, 0.0)

    def cdf(self, y):
        y = np.maximum(np.asarray(y, dtype=float), self.scale)
        return 1.0 - (self.scale / y) ** self.shape

    def ppf(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        with np.errstate(divide="ignore"):
            return self.scale * (1.0 - z) ** (-1.0 / self.shape)

    def partial_mean(self, y):
        y = np.maximum(np.asarray(y, dtype=float), self.scale)
        k, m = self.shape, self.scale
        if k == 1.0:
            return m * np.log(y / m)
        with np.errstate(over="ignore"):
            return k * m**k * (y ** (1.0 - k) - m ** (1.0 - k)) / (1.0 - k)


class _Arcsine:
    """Arcsine law on ``(0, width)``."""

    def __init__(self, width):
        if not width > 0:
            raise RdiError(f"arcsine width must be positive, got {width}")
        self.width = float(width)
        self.lower, self.upper = 0.0, self.width
        self.mean = 0.5 * self.width

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = (y > 0) & (y < self.width)
        yy = np.where(inside, y, 0.5 * self.width)
        return np.where(inside, 1.0 / (math.pi * np.sqrt(yy * (self.width - yy))), 0.0)

    def dpdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = (y > 0) & (y < self.width)
        yy = np.where(inside, y, 0.5 * self.width)
        g = yy * (self.width - yy)
        return np.where(inside, -0.5 * (self.width - 2.0 * yy) * g**-1.5 / math.pi, 0.0)

    def cdf(self, y):
        y = np.clip(np.asarray(y, dtype=float), 0.0, self.width)
        return (2.0 / math.pi) * np.arcsin(np.sqrt(y / self.width))

    def ppf(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
        return self.width * np.sin(0.5 * math.pi * z) ** 2

    def partial_mean(self, y):
        y = np.clip(np.asarray(y, dtype=float), 0.0, self.width)
        theta = np.arcsin(np.sqrt(y / self.width))
        return (self.width / math.pi) * (theta - 0.5 * np.sin(2.0 * theta))


_FAMILIES = {
    "exponential": (_Exponential, 1),
    "uniform": (_Uniform, 2),
    "triangular": (_Triangular, 3),
    "pareto": (_Pareto, 2),
    "arcsine": (_Arcsine, 1),
    "point_mass": (None, 1),
}


# ---------------------------------------------------------------------------
# Public value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Family:
    """A base family with its natural parameters.

    ``exponential(rate)``, ``uniform(lo, hi)``, ``triangular(lo, hi, mode)``,
    ``pareto(shape, scale)``, ``arcsine(width)`` and ``point_mass(loc)``.
    """

    name: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if self.name not in _FAMILIES:
            raise RdiError(f"unknown family {self.name!r}")
        if len(self.params) != _FAMILIES[self.name][1]:
            raise RdiError(f"{self.name} takes {_FAMILIES[self.name][1]} parameter(s), got {len(self.params)}")


@dataclass(frozen=True)
class Mixture:
    components: tuple  # ((weight, RdiSpec), ...)

    def __post_init__(self):
        comps = tuple((float(w), s) for w, s in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise RdiError("empty mixture")
        if any(w < 0 for w, _ in comps):
            raise RdiError("mixture weights must be nonnegative")
        if abs(sum(w for w, _ in comps) - 1.0) > 1e-9:
            raise RdiError("mixture weights must sum to 1")


_TRANSFORM_ARITY = {"time_scale": 1, "time_shift": 1, "density_scale": 1, "rate_shift": 2}
_TRANSFORM_ALIASES = {
    "timescale": "time_scale", "psi1": "time_scale",
    "timeshift": "time_shift", "psi2": "time_shift",
    "densityscale": "density_scale", "psi3": "density_scale",
    "rateshift": "rate_shift", "psi4": "rate_shift",
}


@dataclass(frozen=True)
class Transform:
    op: str
    params: tuple

    def __post_init__(self):
        op = _TRANSFORM_ALIASES.get(self.op.replace("_", "").lower(), self.op)
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if op not in _TRANSFORM_ARITY:
            raise RdiError(f"unknown transform {self.op!r}")
        if len(self.params) != _TRANSFORM_ARITY[op]:
            raise RdiError(f"{op} takes {_TRANSFORM_ARITY[op]} parameter(s)")


def time_scale(xi):
    return Transform("time_scale", (xi,))


def time_shift(xi):
    return Transform("time_shift", (xi,))


def density_scale(xi):
    return Transform("density_scale", (xi,))


def rate_shift(xi, zeta):
    return Transform("rate_shift", (xi, zeta))


@dataclass(frozen=True)
class RdiSpec:
    """Immutable RDI description: a base (family or mixture) plus transforms.

    Transforms are applied in list order, so ``RdiSpec(b, (density_scale(.8),
    rate_shift(.2, 1)))`` first thins the demand and then re-adds an atom.
    Invalid parameters raise :class:`RdiError` here, never at evaluation time.
    """

    base: Union[Family, Mixture]
    transforms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "transforms", tuple(self.transforms))
        self.law  # noqa: B018  (validate eagerly)

    @cached_property
    def law(self) -> "_Law":
        law = _base_law(self.base)
        for tr in self.transforms:
            law = law.apply(tr)
        return law

    def then(self, *ops) -> "RdiSpec":
        return RdiSpec(self.base, self.transforms + tuple(ops))


def exponential(rate=1.0):
    return RdiSpec(Family("exponential", (rate,)))


def uniform(lo=0.0, hi=1.0):
    return RdiSpec(Family("uniform", (lo, hi)))


def triangular(lo, hi, mode):
    return RdiSpec(Family("triangular", (lo, hi, mode)))


def pareto(shape, scale):
    return RdiSpec(Family("pareto", (shape, scale)))


def arcsine(width):
    return RdiSpec(Family("arcsine", (width,)))


def point_mass(loc):
    return RdiSpec(Family("point_mass", (loc,)))


def mixture(*components):
    return RdiSpec(Mixture(tuple(components)))


# ---------------------------------------------------------------------------
# Canonical law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Piece:
    family: object
    weight: float
    scale: float = 1.0
    shift: float = 0.0

    @property
    def support(self):
        return (self.shift + self.scale * self.family.lower, self.shift + self.scale * self.family.upper)

    def _y(self, x):
        return (np.asarray(x, dtype=float) - self.shift) / self.scale


def _merge_atoms(atoms):
    merged = {}
    for loc, w in atoms:
        if w > 0:
            merged[loc] = merged.get(loc, 0.0) + w
    return tuple(sorted(merged.items()))


@dataclass(frozen=True)
class _Law:
    pieces: tuple
    atoms: tuple  # sorted ((loc, mass), ...)
    q: float

    def apply(self, tr: Transform) -> "_Law":
        if tr.op == "time_scale":
            (xi,) = tr.params
            if not xi > 0:
                raise RdiError(f"time_scale needs xi > 0, got {xi}")
            pieces = tuple(_Piece(p.family, p.weight, p.scale / xi, p.shift / xi) for p in self.pieces)
            return _Law(pieces, tuple((z / xi, w) for z, w in self.atoms), self.q)
        if tr.op == "time_shift":
            (xi,) = tr.params
            if self.t_inf + xi < 0:
                raise RdiError("time_shift would move demand mass below zero")
            pieces = tuple(_Piece(p.family, p.weight, p.scale, p.shift + xi) for p in self.pieces)
            return _Law(pieces, tuple((z + xi, w) for z, w in self.atoms), self.q)
        if tr.op == "density_scale":
            (xi,) = tr.params
            if not 0 < xi <= 1:
                raise RdiError(f"density_scale needs 0 < xi <= 1, got {xi}")
            pieces = tuple(_Piece(p.family, p.weight * xi, p.scale, p.shift) for p in self.pieces)
            atoms = tuple((z, w * xi) for z, w in self.atoms)
            return _Law(pieces, atoms, 1.0 - xi * (1.0 - self.q))
        if tr.op == "rate_shift":
            xi, zeta = tr.params
            if not (0 <= xi <= self.q + _MASS_TOL):
                raise RdiError(f"rate_shift needs 0 <= xi <= q={self.q}, got {xi}")
            if zeta < 0:
                raise RdiError(f"rate_shift atom location must be >= 0, got {zeta}")
            xi = min(xi, self.q)
            return _Law(self.pieces, _merge_atoms(self.atoms + ((zeta, xi),)), self.q - xi)
        raise RdiError(f"unknown transform {tr.op!r}")  # pragma: no cover

    # -- scalar summaries ---------------------------------------------------

    @property
    def demand(self):
        return 1.0 - self.q

    @property
    def t_inf(self):
        lows = [p.support[0] for p in self.pieces] + [z for z, _ in self.atoms]
        return min(lows) if lows else 0.0

    @property
    def t_sup(self):
        highs = [p.support[1] for p in self.pieces] + [z for z, _ in self.atoms]
        return max(highs) if highs else 0.0

    @property
    def nu(self):
        total = sum(w * z for z, w in self.atoms)
        for p in self.pieces:
            if math.isinf(p.family.mean):
                return math.inf
            total += p.weight * (p.scale * p.family.mean + p.shift)
        return total

    # -- vectorized evaluation ---------------------------------------------

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for p in self.pieces:
            out = out + p.weight * p.family.pdf(p._y(x)) / p.scale
        return np.where(x >= 0, out, 0.0)

    def dpdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for p in self.pieces:
            out = out + p.weight * p.family.dpdf(p._y(x)) / p.scale**2
        return np.where(x >= 0, out, 0.0)

    def _continuous_cdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for p in self.pieces:
            out = out + p.weight * p.family.cdf(p._y(x))
        return out

    def _atom_mass_upto(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for z, w in self.atoms:
            out = out + np.where(x >= z, w, 0.0)
        return out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        below = (x < 0) | ((x == 0) & np.signbit(x))
        val = self.q + self._continuous_cdf(x) + self._atom_mass_upto(x)
        return np.where(below, self.q, np.minimum(val, 1.0))

    def partial_mean(self, x):
        """``E[X; 0 <= X <= x]`` including atoms at or below ``x``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for p in self.pieces:
            y = p._y(x)
            if math.isinf(p.family.mean):
                pm = p.family.partial_mean(np.where(np.isinf(y), 0.0, y))
                pm = np.where(np.isinf(y), math.inf, pm)
            else:
                pm = np.where(np.isinf(y), p.family.mean, p.family.partial_mean(np.where(np.isinf(y), 0.0, y)))
            out = out + p.weight * (p.scale * pm + p.shift * p.family.cdf(y))
        for z, w in self.atoms:
            out = out + np.where(x >= z, w * z, 0.0)
        return np.where(x < 0, 0.0, out)

    def quantile(self, z):
        z = np.asarray(z, dtype=float)
        if len(self.pieces) <= 1:
            out = self._quantile_closed(z)
        else:
            out = self._quantile_bisect(z)
        return np.where(z <= self.q, 0.0, out)

    def _quantile_closed(self, z):
        out = np.zeros_like(z)
        passed = np.zeros_like(z)
        in_atom = np.zeros(z.shape, dtype=bool)
        piece = self.pieces[0] if self.pieces else None
        cum_w = 0.0
        for loc, w in self.atoms:
            cont = piece.weight * float(piece.family.cdf(piece._y(loc))) if piece else 0.0
            c_minus = self.q + cont + cum_w
            c_plus = c_minus + w
            hit = (~in_atom) & (z > c_minus) & (z <= c_plus)
            out = np.where(hit, loc, out)
            in_atom |= hit
            passed = passed + np.where(z > c_plus, w, 0.0)
            cum_w += w
        if piece is not None:
            u = (z - self.q - passed) / piece.weight
            x = piece.shift + piece.scale * piece.family.ppf(np.clip(u, 0.0, 1.0))
            out = np.where(in_atom, out, x)
        return out

    def _quantile_bisect(self, z):
        hi = np.full_like(z, max(self.t_sup, 1.0) if math.isfinite(self.t_sup) else 1.0)
        if not math.isfinite(self.t_sup):
            for _ in range(2000):
                short = self.cdf(hi) < z
                if not short.any():
                    break
                hi = np.where(short, hi * 2.0, hi)
            hi = np.where(self.cdf(hi) < z, math.inf, hi)
        lo = np.zeros_like(z)
        finite = np.isfinite(hi)
        h = np.where(finite, hi, 0.0)
        for _ in range(200):
            mid = 0.5 * (lo + h)
            ok = self.cdf(mid) >= z
            h = np.where(ok, mid, h)
            lo = np.where(ok, lo, mid)
            if np.all(h - lo <= 4e-16 * np.maximum(h, 1e-300)):
                break
        return np.where(finite, h, math.inf)

    # -- sampling -------------------------------------------------------------

    def sample(self, rng, size):
        weights = [self.q] + [p.weight for p in self.pieces] + [w for _, w in self.atoms]
        weights = np.clip(np.asarray(weights, dtype=float), 0.0, None)
        weights = weights / weights.sum()
        comp = rng.choice(len(weights), size=size, p=weights)
        v = rng.random(size)
        out = np.full(size, NEVER)
        for k, p in enumerate(self.pieces, start=1):
            m = comp == k
            if m.any():
                out[m] = p.shift + p.scale * p.family.ppf(v[m])
        offset = 1 + len(self.pieces)
        for k, (loc, _) in enumerate(self.atoms):
            out[comp == offset + k] = loc
        return out


def _base_law(base) -> _Law:
    if isinstance(base, Family):
        if base.name == "point_mass":
            (loc,) = base.params
            if loc < 0:
                raise RdiError(f"point mass location must be >= 0, got {loc}")
            return _Law((), ((loc, 1.0),), 0.0)
        cls, _ = _FAMILIES[base.name]
        return _Law((_Piece(cls(*base.params), 1.0),), (), 0.0)
    if isinstance(base, Mixture):
        pieces, atoms, q = [], [], 0.0
        for w, spec in base.components:
            law = spec.law
            pieces += [_Piece(p.family, p.weight * w, p.scale, p.shift) for p in law.pieces if p.weight * w > 0]
            atoms += [(z, m * w) for z, m in law.atoms]
            q += w * law.q
        return _Law(tuple(pieces), _merge_atoms(atoms), q)
    raise RdiError(f"unsupported base {base!r}")


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------


def _out(value, x):
    return float(value) if np.ndim(x) == 0 else value


def pdf(spec: RdiSpec, x):
    """Density on ``[0, inf)``; atoms are reported by :func:`atoms`, never here."""
    return _out(spec.law.pdf(x), x)


def dpdf(spec: RdiSpec, x):
    return _out(spec.law.dpdf(x), x)


def cdf(spec: RdiSpec, x):
    """``q`` plus the demand mass on ``[0, x]``; ``x = -0.0`` means just below zero."""
    return _out(spec.law.cdf(x), x)


def atoms(spec: RdiSpec):
    return list(spec.law.atoms)


def undemand_prob(spec: RdiSpec) -> float:
    return spec.law.q


def partial_mean(spec: RdiSpec, t):
    """``integral_0^t x dP(x)``, atoms included."""
    return _out(spec.law.partial_mean(t), t)


def quantile(spec: RdiSpec, z):
    """Generalized inverse ``inf{x >= 0 : cdf(x) >= z}`` for ``q <= z <= 1``."""
    zz = np.asarray(z, dtype=float)
    q = spec.law.q
    if np.any(zz > 1.0 + 1e-12):
        raise RdiError("quantile level above 1")
    if np.any(zz < q - 1e-12):
        raise RdiError("request below undemand mass")
    return _out(spec.law.quantile(np.clip(zz, q, 1.0)), z)


@dataclass(frozen=True)
class Moments:
    q: float
    nu: float
    t_inf: float
    t_sup: float


def moments(spec: RdiSpec) -> Moments:
    law = spec.law
    return Moments(q=law.q, nu=law.nu, t_inf=law.t_inf, t_sup=law.t_sup)


def sample_request_delay(spec: RdiSpec, rng: np.random.Generator, size=None):
    """Draw request delays; "never requested" comes back as ``-inf``."""
    if size is None:
        return float(spec.law.sample(rng, 1)[0])
    return spec.law.sample(rng, size)


def support_breakpoints(spec: RdiSpec):
    """Finite points where the law is not smooth (support ends, modes, atoms)."""
    pts = set()
    for p in spec.law.pieces:
        lo, hi = p.support
        pts.add(lo)
        if math.isfinite(hi):
            pts.add(hi)
        if isinstance(p.family, _Triangular):
            pts.add(p.shift + p.scale * p.family.mode)
    pts.update(z for z, _ in spec.law.atoms)
    return sorted(x for x in pts if x >= 0)


# ---------------------------------------------------------------------------
# JSON round trip and presets
# ---------------------------------------------------------------------------


def spec_to_dict(spec: RdiSpec) -> dict:
    if isinstance(spec.base, Family):
        base = {"family": spec.base.name, "params": list(spec.base.params)}
    else:
        base = {
            "family": "mixture",
            "components": [{"weight": w, "rdi": spec_to_dict(s)} for w, s in spec.base.components],
        }
    return {"base": base, "transforms": [{"op": t.op, "params": list(t.params)} for t in spec.transforms]}


def spec_from_dict(data) -> RdiSpec:
    """Build a spec from its JSON form or from a preset name such as ``"p4"``."""
    if isinstance(data, str):
        return preset(data)
    if isinstance(data, RdiSpec):
        return data
    try:
        base = data["base"]
        if base["family"] == "mixture":
            b = Mixture(tuple((c["weight"], spec_from_dict(c["rdi"])) for c in base["components"]))
        else:
            b = Family(base["family"], tuple(base["params"]))
        trs = tuple(Transform(t["op"], tuple(t["params"])) for t in data.get("transforms", ()))
    except (KeyError, TypeError) as exc:
        raise RdiError(f"malformed RDI spec: {exc}") from exc
    return RdiSpec(b, trs)


def _presets():
    p1 = exponential(1.0)
    p2 = uniform(0.0, 1.0)
    p3 = triangular(0.0, 2.0, 1.0)
    p4 = pareto(1.0, 1.0)
    p5 = arcsine(2.0)
    return {
        "p1": p1,
        "p2": p2,
        "p3": p3,
        "p4": p4,
        "p5": p5,
        "p6": p1.then(density_scale(0.6)),
        "p7": p2.then(time_scale(0.5)),
        "p8": p3.then(time_shift(1.0)),
        "p9": p4.then(density_scale(0.4)),
        "p10": p5.then(density_scale(0.8), rate_shift(0.2, 1.0)),
    }


PRESETS = _presets()


def preset(name: str) -> RdiSpec:
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise RdiError(f"unknown RDI preset {name!r}; choose from {sorted(PRESETS)}") from None
