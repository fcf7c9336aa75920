"""JSON run configuration: defaults, parsing, and typed accessors."""
from __future__ import annotations

import copy
import json
import os
from pathlib import Path

from .model import ArrivalRates, ChannelProfile, OutOfRange
from .optimize import Objective, ObjectiveKind, SweepAxis
from .sim import Policy, PolicyKind

SEED_ENV = "COOPRA_SEED"

DEFAULT_CONFIG = {
    "channel": {"f_pd": 0.3, "f_sd": 0.8, "f_ps": 0.4},
    "rates": {"lambda_p": 0.2, "lambda_s": 0.2},
    "policy": {"kind": "randomized", "a": 0.6},
    "sim": {"horizon": 1_000_000, "warmup": 100_000, "replications": 5, "seed": 0},
    "sweep": {
        "axis": "lambda_joint",
        "fixed_rate": 0.2,
        "grid": {"start": 0.05, "stop": 0.2, "step": 0.05},
        "a_values": [0.45, 0.6, 0.75],
        "policies": ["randomized", "priority_relay", "no_cooperation"],
    },
    "optimize": {"objective": "min_primary_delay", "w_p": 1.0, "w_s": 0.0, "margin": 1e-6},
}

_INT_FIELDS = {("sim", "horizon"), ("sim", "warmup"), ("sim", "replications"), ("sim", "seed")}


class ConfigError(ValueError):
    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


def _merge(base: dict, override: dict, path: str) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(where, "unknown field")
        if isinstance(base[key], dict) and key != "grid":
            if not isinstance(value, dict):
                raise ConfigError(where, "expected an object")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Defaults overlaid with the JSON document at ``path`` (if any)."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from exc
    if not isinstance(doc, dict):
        raise ConfigError(str(path), "top level must be an object")
    cfg = _merge(DEFAULT_CONFIG, doc, "")
    check_config(cfg)
    return cfg


def resolve_seed(cfg: dict, flag: int | None = None) -> dict:
    """Apply the seed precedence: flag, then environment, then config."""
    cfg = copy.deepcopy(cfg)
    env = os.environ.get(SEED_ENV)
    if flag is not None:
        cfg["sim"]["seed"] = flag
    elif env:
        try:
            cfg["sim"]["seed"] = int(env, 0)
        except ValueError as exc:
            raise ConfigError(SEED_ENV, f"not an integer: {env!r}") from exc
    return cfg


def grid_values(spec) -> list[float]:
    if isinstance(spec, list):
        return [float(x) for x in spec]
    start, stop, step = (float(spec[k]) for k in ("start", "stop", "step"))
    if step <= 0:
        raise ConfigError("sweep.grid.step", "must be positive")
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 12) for i in range(n) if start + i * step <= stop + 1e-12]


def check_config(cfg: dict) -> None:
    """Build every typed object once so errors name their field."""
    for section, key in _INT_FIELDS:
        v = cfg[section][key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{section}.{key}", f"expected an integer, got {v!r}")
    for fn, where in ((channel, "channel"), (rates, "rates"), (policy, "policy"), (objective, "optimize")):
        try:
            fn(cfg)
        except OutOfRange as exc:
            raise ConfigError(f"{where}.{exc.field}", str(exc)) from exc
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(where, str(exc)) from exc
    sw = cfg["sweep"]
    try:
        SweepAxis(sw["axis"])
        [PolicyKind[p.upper()] for p in sw["policies"]]
    except (ValueError, KeyError) as exc:
        raise ConfigError("sweep", f"bad axis or policy name: {exc}") from exc
    grid = grid_values(sw["grid"])
    if not grid:
        raise ConfigError("sweep.grid", "empty grid")
    margin = cfg["optimize"]["margin"]
    if not (isinstance(margin, (int, float)) and margin > 0):
        raise ConfigError("optimize.margin", f"must be positive, got {margin!r}")


def channel(cfg: dict) -> ChannelProfile:
    ch = cfg["channel"]
    return ChannelProfile(ch["f_pd"], ch["f_sd"], ch["f_ps"])


def rates(cfg: dict) -> ArrivalRates:
    return ArrivalRates(cfg["rates"]["lambda_p"], cfg["rates"]["lambda_s"])


def policy(cfg: dict) -> Policy:
    kind = PolicyKind[cfg["policy"]["kind"].upper()]
    return Policy(kind, cfg["policy"]["a"] if kind is PolicyKind.RANDOMIZED else None)


def objective(cfg: dict) -> Objective:
    o = cfg["optimize"]
    kind = ObjectiveKind(o["objective"])
    if kind is ObjectiveKind.WEIGHTED_SUM:
        return Objective.weighted(o["w_p"], o["w_s"])
    if kind is ObjectiveKind.MIN_PRIMARY_DELAY:
        return Objective.min_primary()
    return Objective.min_secondary()
