"""Line-oriented ``key = value`` experiment configs.

Every experiment config is a frozen dataclass whose field names are the
accepted keys; values are converted according to the field annotation.
"""
from __future__ import annotations

import dataclasses
import math
import typing
from pathlib import Path


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


def parse_pairs(text: str, source: str = "<config>") -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _to_bool(s: str) -> bool:
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _to_float(s: str) -> float:
    v = s.lower()
    if v in ("inf", "+inf", "infinity"):
        return math.inf
    return float(s)


def _convert(tp, s: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or (origin is not None and type(None) in args):
        inner = [a for a in args if a is not type(None)][0]
        return None if s.lower() == "none" else _convert(inner, s)
    if origin is tuple:
        return tuple(_convert(args[0], part.strip()) for part in s.split(",") if part.strip())
    if tp is bool:
        return _to_bool(s)
    if tp is int:
        return int(s)
    if tp is float:
        return _to_float(s)
    if tp is str:
        return s
    raise TypeError(f"unsupported config type {tp!r}")


def from_pairs(cls, pairs: dict[str, str], source: str = "<config>"):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(pairs) - names)
    if unknown:
        raise ConfigError(f"{source}: unknown key(s) {', '.join(unknown)}")
    kw = {}
    for key, raw in pairs.items():
        try:
            kw[key] = _convert(hints[key], raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from None
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load(cls, path: str | Path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    return from_pairs(cls, parse_pairs(text, str(p)), str(p))


def dumps(obj) -> str:
    """Render a config dataclass back to ``key = value`` text."""
    lines = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
