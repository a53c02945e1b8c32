"""Run configuration: a flat JSON object with a fixed, typed schema.

Every key is optional except the problem parameters n, K1, K2, q1, q2.
Unknown keys are rejected.  Floats are written with 17 significant digits
so that a config echo reads back to the identical value.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from typing import Any

from .errors import DomainError
from .integrate import ATOL, RTOL
from .manifolds import ARCLENGTH_BUDGET, BRANCH_TAGS
from .params import ProblemConfig
from .shooting import BISECT_RTOL, FAR_HORIZON, SCAN_POINTS

FAMILIES = ("auto", "D", "L")
FORMATS = ("json", "csv", "both")


class ConfigError(DomainError):
    """Malformed config file: unknown key, wrong type, bad value."""


@dataclass(frozen=True)
class RunConfig:
    # problem
    n: int
    K1: float
    K2: float
    q1: float
    q2: float
    eta: float = 0.0
    delta1: float = 0.0
    delta2: float = 0.0
    rho: float = 1.0
    # structure search
    family: str = "auto"
    k_max: int = 2
    horizon: float = FAR_HORIZON
    budget: float = ARCLENGTH_BUDGET
    scan_points: int = SCAN_POINTS
    bisect_rtol: float = BISECT_RTOL
    # integration
    rtol: float = RTOL
    atol: float = ATOL
    # manifolds / portrait
    branches: tuple[str, ...] = BRANCH_TAGS
    portrait_grid: int = 5
    portrait_horizon: float = 20.0
    jitter_seed: int | None = None
    # scaling check
    kbar: float = 4.0
    rhobar: float = 2.0
    # output
    format: str = "json"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}, got {self.format!r}")
        if self.k_max < 0:
            raise ConfigError(f"k_max must be >= 0, got {self.k_max!r}")
        if self.scan_points < 8:
            raise ConfigError(f"scan_points must be >= 8, got {self.scan_points!r}")
        if self.portrait_grid < 1:
            raise ConfigError(f"portrait_grid must be >= 1, got {self.portrait_grid!r}")
        for key in ("horizon", "budget", "bisect_rtol", "rtol", "atol", "portrait_horizon", "kbar", "rhobar"):
            v = getattr(self, key)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{key} must be positive and finite, got {v!r}")
        bad = [b for b in self.branches if b not in BRANCH_TAGS]
        if bad or len(set(self.branches)) != len(self.branches):
            raise ConfigError(f"branches must be distinct tags from {BRANCH_TAGS}, got {list(self.branches)!r}")
        self.problem()  # validates the physical parameters

    def problem(self) -> ProblemConfig:
        return ProblemConfig(
            n=self.n, eta=self.eta, K1=self.K1, K2=self.K2, q1=self.q1, q2=self.q2,
            delta1=self.delta1, delta2=self.delta2, rho=self.rho,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["branches"] = list(self.branches)
        return d

    def replace(self, **changes) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return from_dict(d)


_REQUIRED = ("n", "K1", "K2", "q1", "q2")


def _coerce(name: str, kind: str, value: Any):
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}")
        return value
    if kind == "optint":
        return None if value is None else _coerce(name, "int", value)
    if kind == "tags":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{name} must be a list of strings, got {value!r}")
        return tuple(value)
    raise AssertionError(kind)


_KINDS = {
    "n": "int", "k_max": "int", "scan_points": "int", "portrait_grid": "int",
    "jitter_seed": "optint", "family": "str", "format": "str", "branches": "tags",
}


def schema() -> dict[str, str]:
    """Key -> type name for every accepted key."""
    return {f.name: _KINDS.get(f.name, "float") for f in fields(RunConfig)}


def from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    kinds = schema()
    unknown = sorted(set(data) - set(kinds))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    missing = [k for k in _REQUIRED if k not in data]
    if missing:
        raise ConfigError(f"missing required config keys: {', '.join(missing)}")
    values = {k: _coerce(k, kinds[k], v) for k, v in data.items()}
    return RunConfig(**values)


def loads(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return from_dict(data)


def load(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from None
    return loads(text)


# ---------------------------------------------------------------- stable JSON


def _enc_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return format(v, ".17g")


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _enc_float(obj)
    if hasattr(obj, "dtype"):  # numpy scalar
        return _encode(obj.item(), indent, level)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "tolist"):
        return _encode(obj.tolist(), indent, level)
    return json.dumps(str(obj))


def dumps(obj, indent: int = 2) -> str:
    """JSON with 17-significant-digit floats and insertion-ordered keys."""
    return _encode(obj, indent, 0) + "\n"
