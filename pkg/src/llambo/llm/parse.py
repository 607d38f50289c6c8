"""Strict parsing of model replies into configurations or scores."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, List, Optional

from ..space import Config, SearchSpace


class ParseError(ValueError):
    """Reply could not be turned into the expected payload."""


class FormatError(ParseError):
    pass


class MissingKeyError(ParseError):
    def __init__(self, name: str):
        super().__init__(f"missing hyperparameter {name!r}")
        self.name = name


class BoundsError(ParseError):
    pass


class ArityError(ParseError):
    pass


class SchemaError(ParseError):
    pass


@dataclass
class ParsedResponse:
    kind: str
    payload: Any
    raw_text: str
    # invalid entries dropped from a config_list reply
    rejected: List[str] = field(default_factory=list)
    attempts: int = 1
    fallback: bool = False
    errors: List[str] = field(default_factory=list)
    duplicate: bool = False

    @property
    def retries(self) -> int:
        return self.attempts - 1


_decoder = json.JSONDecoder()
_FENCE = re.compile(r"^```[a-zA-Z]*\s*|\s*```$")
_NUMERIC = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def _first_json(text: str, openers: str):
    """First JSON value in ``text`` that starts with one of ``openers``."""
    for i, ch in enumerate(text):
        if ch in openers:
            try:
                value, _ = _decoder.raw_decode(text, i)
                return value
            except json.JSONDecodeError:
                continue
    raise FormatError("no JSON value found in reply")


def _coerce_number(name: str, value: Any) -> float:
    if isinstance(value, bool):
        raise SchemaError(f"{name}: expected a number, got {value!r}")
    if isinstance(value, str):
        s = value.strip()
        if not _NUMERIC.match(s):
            raise SchemaError(f"{name}: expected a number, got {value!r}")
        value = float(s)
    if not isinstance(value, (int, float)):
        raise SchemaError(f"{name}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise SchemaError(f"{name}: value is not finite")
    return value


def parse_config(obj: Any, space: SearchSpace) -> Config:
    if not isinstance(obj, dict):
        raise SchemaError(f"expected a JSON object, got {type(obj).__name__}")
    unknown = sorted(set(obj) - set(space.names))
    if unknown:
        raise SchemaError(f"unknown hyperparameters {unknown}")
    out: Config = {}
    for p in space.params:
        if p.name not in obj:
            raise MissingKeyError(p.name)
        raw = obj[p.name]
        if p.kind == "categorical":
            if raw in p.choices:
                out[p.name] = raw
            elif str(raw) in p.choices:
                out[p.name] = str(raw)
            else:
                raise BoundsError(f"{p.name}: {raw!r} is not one of {list(p.choices)}")
            continue
        v = _coerce_number(p.name, raw)
        if v < p.lower or v > p.upper:
            raise BoundsError(f"{p.name}: {v:g} is outside [{p.lower:g}, {p.upper:g}]")
        if p.kind == "integer":
            if v != round(v):
                raise SchemaError(f"{p.name}: {v:g} is not an integer")
            out[p.name] = int(round(v))
        else:
            out[p.name] = v
    return space.validate(out)


def _strip_fences(text: str) -> str:
    return _FENCE.sub("", text.strip()).strip()


def parse_response(text: str, schema: str, space: Optional[SearchSpace] = None,
                   k: Optional[int] = None) -> ParsedResponse:
    """Parse a reply for ``schema`` in {"config", "config_list", "score"}.

    Surrounding prose and code fences are tolerated; nothing is clamped.  For
    ``config_list`` an array of the wrong length is an error, while individual
    invalid entries are dropped (and listed in ``rejected``) as long as at
    least one entry is valid.
    """
    if schema == "score":
        stripped = _strip_fences(text)
        if _NUMERIC.match(stripped):
            return ParsedResponse("score", float(stripped), text)
        obj = _first_json(text, "{")
        if not isinstance(obj, dict) or "score" not in obj:
            raise SchemaError('expected {"score": <number>} or a bare number')
        return ParsedResponse("score", _coerce_number("score", obj["score"]), text)

    if space is None:
        raise ValueError(f"schema {schema!r} needs a search space")
    if schema == "config":
        return ParsedResponse("config", parse_config(_first_json(text, "{"), space), text)
    if schema != "config_list":
        raise ValueError(f"unknown schema {schema!r}")

    obj = _first_json(text, "[{")
    if isinstance(obj, dict):
        if isinstance(obj.get("configs"), list):
            obj = obj["configs"]
        else:
            raise ArityError("expected a JSON array of configurations")
    if k is not None and len(obj) != k:
        raise ArityError(f"expected exactly {k} configurations, got {len(obj)}")
    if not obj:
        raise ArityError("empty configuration list")
    configs, rejected, first_err = [], [], None
    for i, entry in enumerate(obj):
        try:
            configs.append(parse_config(entry, space))
        except ParseError as exc:
            rejected.append(f"entry {i}: {exc}")
            first_err = first_err or exc
    if not configs:
        raise first_err
    return ParsedResponse("config_list", configs, text, rejected)
