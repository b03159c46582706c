"""Flat ``key=value`` config files mapped onto the dataclass configs."""
from __future__ import annotations

from dataclasses import fields, replace
from pathlib import Path


class ConfigError(ValueError):
    pass


def parse_keyvalue(text, source="<config>"):
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got '{raw.strip()}'")
        k, _, v = line.partition("=")
        k = k.strip()
        if not k:
            raise ConfigError(f"{source}:{n}: empty key")
        out[k] = v.strip()
    return out


def _coerce(value, default, key):
    if isinstance(default, bool):
        low = str(value).lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got '{value}'")
    try:
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from None
    return str(value)


def apply_overrides(config, values: dict):
    """Return a copy of dataclass ``config`` with string ``values`` coerced
    to the field types; unknown keys raise :class:`ConfigError`."""
    known = {f.name for f in fields(config)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    changes = {k: _coerce(v, getattr(config, k), k) for k, v in values.items()}
    return replace(config, **changes)


def load_config(path, base):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"{path}: {e}") from e
    return apply_overrides(base, parse_keyvalue(text, str(path)))


def dump_config(config):
    return "".join(f"{f.name}={getattr(config, f.name)}\n" for f in fields(config))
