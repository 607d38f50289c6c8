"""Typed hyperparameter search spaces and space-filling initial designs.

Every design, surrogate and metric works in unit-cube coordinates.  Continuous
and integer parameters map affinely (or logarithmically for ``scale="log"``)
onto ``[0, 1]``; a categorical with ``k`` choices encodes choice ``i`` as the
bucket centre ``(i + 0.5) / k``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from scipy.stats import qmc

Value = Union[float, int, str]
Config = Dict[str, Value]

KINDS = ("continuous", "integer", "categorical")
SCALES = ("linear", "log")

# scipy ships direction numbers for this many dimensions.
MAX_SOBOL_DIM = 21201


class SpaceError(ValueError):
    """Invalid search space definition or configuration."""


@dataclass(frozen=True)
class ParamSpec:
    name: str
    kind: str
    lower: Optional[float] = None
    upper: Optional[float] = None
    choices: Optional[tuple] = None
    scale: str = "linear"

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise SpaceError(f"parameter name must be a nonempty string, got {self.name!r}")
        if self.kind not in KINDS:
            raise SpaceError(f"{self.name}: unknown kind {self.kind!r}")
        if self.scale not in SCALES:
            raise SpaceError(f"{self.name}: unknown scale {self.scale!r}")
        if self.kind == "categorical":
            if self.lower is not None or self.upper is not None:
                raise SpaceError(f"{self.name}: categorical parameters take no bounds")
            if self.choices is None:
                raise SpaceError(f"{self.name}: categorical parameters need choices")
            choices = tuple(self.choices)
            if len(set(choices)) != len(choices) or len(choices) < 2:
                raise SpaceError(f"{self.name}: need at least 2 distinct choices")
            if self.scale != "linear":
                raise SpaceError(f"{self.name}: categorical parameters cannot be log-scaled")
            object.__setattr__(self, "choices", choices)
        else:
            if self.choices is not None:
                raise SpaceError(f"{self.name}: only categorical parameters take choices")
            if self.lower is None or self.upper is None:
                raise SpaceError(f"{self.name}: bounds required for {self.kind} parameters")
            lo, hi = float(self.lower), float(self.upper)
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
                raise SpaceError(f"{self.name}: need finite lower < upper, got [{lo}, {hi}]")
            if self.scale == "log" and lo <= 0:
                raise SpaceError(f"{self.name}: log scale requires lower > 0")
            if self.kind == "integer" and math.ceil(lo) > math.floor(hi):
                raise SpaceError(f"{self.name}: integer range [{lo}, {hi}] holds no integer")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)

    @property
    def is_log(self) -> bool:
        return self.scale == "log"

    def validate(self, value: Any) -> Value:
        """Return ``value`` coerced to this parameter's type, or raise SpaceError."""
        if self.kind == "categorical":
            if value not in self.choices:
                raise SpaceError(f"{self.name}: {value!r} is not one of {list(self.choices)}")
            return value
        if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
            raise SpaceError(f"{self.name}: expected a number, got {value!r}")
        v = float(value)
        if not math.isfinite(v):
            raise SpaceError(f"{self.name}: value {value!r} is not finite")
        if v < self.lower or v > self.upper:
            raise SpaceError(f"{self.name}: value {value!r} outside [{self.lower}, {self.upper}]")
        if self.kind == "integer":
            if v != round(v):
                raise SpaceError(f"{self.name}: value {value!r} is not integral")
            return int(round(v))
        return v

    def to_unit(self, value: Value) -> float:
        if self.kind == "categorical":
            k = len(self.choices)
            return (self.choices.index(value) + 0.5) / k
        v = float(value)
        if self.is_log:
            lo, hi = math.log(self.lower), math.log(self.upper)
            return (math.log(v) - lo) / (hi - lo)
        return (v - self.lower) / (self.upper - self.lower)

    def from_unit(self, u: float) -> Value:
        u = min(max(float(u), 0.0), 1.0)
        if self.kind == "categorical":
            k = len(self.choices)
            return self.choices[min(int(math.floor(u * k)), k - 1)]
        if self.is_log:
            lo, hi = math.log(self.lower), math.log(self.upper)
            raw = math.exp(lo + u * (hi - lo))
        else:
            raw = self.lower + u * (self.upper - self.lower)
        if self.kind == "integer":
            # round() ties to even
            ival = int(round(raw))
            return int(min(max(ival, math.ceil(self.lower)), math.floor(self.upper)))
        return float(min(max(raw, self.lower), self.upper))

    def to_dict(self) -> dict:
        d: dict = {"name": self.name, "kind": self.kind}
        if self.kind == "categorical":
            d["choices"] = list(self.choices)
        else:
            d["lower"] = self.lower
            d["upper"] = self.upper
            d["scale"] = self.scale
        return d


@dataclass(frozen=True)
class SearchSpace:
    params: tuple = field(default_factory=tuple)

    def __post_init__(self):
        params = tuple(self.params)
        if not params:
            raise SpaceError("a search space needs at least one parameter")
        names = [p.name for p in params]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise SpaceError(f"duplicate parameter names: {sorted(dup)}")
        object.__setattr__(self, "params", params)

    @property
    def d(self) -> int:
        return len(self.params)

    @property
    def names(self) -> List[str]:
        return [p.name for p in self.params]

    def __getitem__(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def validate(self, config: Config) -> Config:
        """Check that ``config`` holds exactly one in-domain value per parameter."""
        extra = set(config) - set(self.names)
        if extra:
            raise SpaceError(f"unknown parameters: {sorted(extra)}")
        out = {}
        for p in self.params:
            if p.name not in config:
                raise SpaceError(f"{p.name}: missing value")
            out[p.name] = p.validate(config[p.name])
        return out

    def renamed(self, names: Sequence[str]) -> "SearchSpace":
        if len(names) != self.d:
            raise SpaceError("need one new name per parameter")
        return SearchSpace(tuple(
            ParamSpec(n, p.kind, p.lower, p.upper, p.choices, p.scale)
            for n, p in zip(names, self.params)
        ))

    @classmethod
    def from_dict(cls, doc: dict) -> "SearchSpace":
        if not isinstance(doc, dict) or "params" not in doc:
            raise SpaceError('search space document needs a "params" list')
        params = []
        for i, raw in enumerate(doc["params"]):
            if not isinstance(raw, dict):
                raise SpaceError(f"params[{i}] must be an object")
            known = {"name", "kind", "lower", "upper", "scale", "choices"}
            unknown = set(raw) - known
            if unknown:
                raise SpaceError(f"params[{i}]: unknown fields {sorted(unknown)}")
            choices = raw.get("choices")
            params.append(ParamSpec(
                name=raw.get("name"),
                kind=raw.get("kind"),
                lower=raw.get("lower"),
                upper=raw.get("upper"),
                choices=tuple(choices) if choices is not None else None,
                scale=raw.get("scale", "linear"),
            ))
        return cls(tuple(params))

    def to_dict(self) -> dict:
        return {"params": [p.to_dict() for p in self.params]}

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SearchSpace":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def normalize(space: SearchSpace, config: Config) -> np.ndarray:
    """Map a configuration into the unit cube."""
    config = space.validate(config)
    return np.array([p.to_unit(config[p.name]) for p in space.params], dtype=float)


def denormalize(space: SearchSpace, u: Sequence[float]) -> Config:
    """Inverse of :func:`normalize`; integers round to nearest, categoricals pick a bucket."""
    u = np.asarray(u, dtype=float).ravel()
    if u.shape[0] != space.d:
        raise SpaceError(f"unit point has dimension {u.shape[0]}, space has {space.d}")
    return {p.name: p.from_unit(ui) for p, ui in zip(space.params, u)}


def snap_array(space: SearchSpace, U: np.ndarray) -> np.ndarray:
    """Project unit points onto the coordinates real configurations can take.

    Vectorised equivalent of ``normalize(denormalize(u))`` row by row.
    """
    U = np.clip(np.atleast_2d(np.asarray(U, dtype=float)), 0.0, 1.0)
    out = U.copy()
    for j, p in enumerate(space.params):
        col = U[:, j]
        if p.kind == "categorical":
            k = len(p.choices)
            idx = np.minimum(np.floor(col * k), k - 1)
            out[:, j] = (idx + 0.5) / k
        elif p.kind == "integer":
            if p.is_log:
                lo, hi = math.log(p.lower), math.log(p.upper)
                raw = np.exp(lo + col * (hi - lo))
            else:
                raw = p.lower + col * (p.upper - p.lower)
            raw = np.clip(np.round(raw), math.ceil(p.lower), math.floor(p.upper))
            if p.is_log:
                out[:, j] = (np.log(raw) - lo) / (hi - lo)
            else:
                out[:, j] = (raw - p.lower) / (p.upper - p.lower)
    return out


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_unit(n: int, d: int, seed=None) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    return _rng(seed).random((n, d))


def sobol_unit(n: int, d: int, seed=None, scramble: bool = True, skip: int = 0) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    if d > MAX_SOBOL_DIM:
        raise SpaceError(f"Sobol sequences support at most {MAX_SOBOL_DIM} dimensions, got {d}")
    engine = qmc.Sobol(d, scramble=scramble, seed=seed if scramble else None)
    with warnings.catch_warnings():
        # balance warnings for n that is not a power of two
        warnings.simplefilter("ignore", UserWarning)
        if skip:
            engine.fast_forward(skip)
        return engine.random(n)


def lhc_unit(n: int, d: int, seed=None) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    out = np.empty((n, d))
    for j in range(d):
        strata = rng.permutation(n)
        out[:, j] = (strata + rng.random(n)) / n
    # jitter of exactly 1.0 is impossible (random() is in [0, 1))
    return out


def _configs(space: SearchSpace, U: np.ndarray) -> List[Config]:
    return [denormalize(space, row) for row in U]


def sample_random(space: SearchSpace, n: int, seed=None) -> List[Config]:
    return _configs(space, random_unit(n, space.d, seed))


def sample_sobol(space: SearchSpace, n: int, seed=None, scramble: bool = True,
                 skip: int = 0) -> List[Config]:
    return _configs(space, sobol_unit(n, space.d, seed, scramble=scramble, skip=skip))


def sample_lhc(space: SearchSpace, n: int, seed=None) -> List[Config]:
    return _configs(space, lhc_unit(n, space.d, seed))


DESIGNS = {
    "random": sample_random,
    "sobol": sample_sobol,
    "lhc": sample_lhc,
}


def format_value(value: Value) -> str:
    """Render a parameter value the same way everywhere it appears in text."""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return f"{float(value):.6g}"


def normalized_array(space: SearchSpace, configs: Iterable[Config]) -> np.ndarray:
    rows = [normalize(space, c) for c in configs]
    return np.array(rows, dtype=float).reshape(len(rows), space.d)
