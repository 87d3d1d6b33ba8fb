"""Named flows, arrival processes and the JSON configuration schema.

One JSON schema covers RDIs, flows and simulation configs:

* RDI: ``"p4"`` or ``{"base": {...}, "transforms": [...]}``
* flow: ``"pi2"``, or ``{"preset": "pi2", "lam": 10, "B": 1000, "c2": 1}``, or
  ``{"classes": [{"weight": 0.5, "rdi": ...}, ...], "lam": ..., "B": ..., "c2": ...}``
* arrivals: ``{"kind": "poisson" | "deterministic" | "h2", "lam": 10, "h2": [w1, mu1, w2, mu2]}``
* simulation: ``{"flow": ..., "arrivals": ..., "buffer": 10, "n_arrivals": 1e6,
  "seed": 0, "policies": [...] | "s": 0.6 | "target_r": 0.7}``
"""

from __future__ import annotations

import json

from . import allocator, rdi, simulator
from .allocator import FlowSpec
from .ratecost import CachePolicy

CLASS_NAMES = tuple(f"p{i}" for i in range(1, 11))

FLOW_WEIGHTS = {
    "pi1": (0.1,) * 10,
    "pi2": (0.2, 0.2, 0.2, 0.0, 0.0, 0.0, 0.2, 0.2, 0.0, 0.0),
    "pi3": (0.0, 0.0, 0.0, 0.0, 0.0, 0.2, 0.2, 0.2, 0.2, 0.2),
}

ARRIVAL_KINDS = ("poisson", "deterministic", "h2")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


def flow(name: str, lam: float = 10.0, B: float = 1000.0, c2: float = 1.0) -> FlowSpec:
    """One of the three reference flows over classes ``p1..p10``."""
    if name not in FLOW_WEIGHTS:
        raise ConfigError(f"unknown flow preset {name!r}; choose from {sorted(FLOW_WEIGHTS)}")
    classes = tuple((w, rdi.preset(c)) for w, c in zip(FLOW_WEIGHTS[name], CLASS_NAMES))
    return FlowSpec(classes, lam=lam, B=B, c2=c2)


def arrivals(kind: str, lam: float = 10.0) -> simulator.ArrivalProcess:
    """Poisson, deterministic or the bursty two-phase hyperexponential (c2 = 2)."""
    if kind not in ARRIVAL_KINDS:
        raise ConfigError(f"unknown arrival kind {kind!r}")
    return simulator.ArrivalProcess(kind, lam)


def flow_from_dict(data) -> FlowSpec:
    try:
        if isinstance(data, str):
            return flow(data)
        kw = {k: float(data[k]) for k in ("lam", "B", "c2") if k in data}
        if "preset" in data:
            return flow(data["preset"], **kw)
        classes = tuple((float(c["weight"]), rdi.spec_from_dict(c["rdi"])) for c in data["classes"])
        return FlowSpec(classes, **kw)
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid flow config: {exc}") from exc


def flow_to_dict(f: FlowSpec) -> dict:
    return {
        "classes": [{"weight": w, "rdi": rdi.spec_to_dict(s)} for w, s in f.classes],
        "lam": f.lam,
        "B": f.B,
        "c2": f.c2,
    }


def arrivals_from_dict(data, default_lam: float) -> simulator.ArrivalProcess:
    try:
        if data is None:
            return simulator.ArrivalProcess("poisson", default_lam)
        if isinstance(data, str):
            return simulator.ArrivalProcess(data, default_lam)
        h2 = tuple(data["h2"]) if data.get("h2") is not None else None
        return simulator.ArrivalProcess(data.get("kind", "poisson"), float(data.get("lam", default_lam)), h2)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid arrival config: {exc}") from exc


def sim_config_from_dict(data: dict, seed: int | None = None, record: bool = False) -> simulator.SimConfig:
    """Build a :class:`SimConfig`; policies come from an explicit list, a cost ``s`` or a ``target_r``."""
    try:
        f = flow_from_dict(data["flow"])
        arr = arrivals_from_dict(data.get("arrivals"), f.lam)
        if "policies" in data:
            pols = tuple(CachePolicy.from_dict(p) for p in data["policies"])
        elif "s" in data:
            pols = allocator.policies_for_cost(f, float(data["s"])).policies
        elif "target_r" in data:
            pols = allocator.allocate(f, float(data["target_r"])).policies
        else:
            raise ConfigError("simulation config needs 'policies', 's' or 'target_r'")
        return simulator.SimConfig(
            f,
            pols,
            arr,
            buffer=data.get("buffer"),
            n_arrivals=int(float(data.get("n_arrivals", 1_000_000))),
            seed=int(data.get("seed", 0) if seed is None else seed),
            warmup_fraction=float(data.get("warmup_fraction", 0.1)),
            n_batches=int(data.get("n_batches", 32)),
            record=record,
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid simulation config: {exc}") from exc


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
