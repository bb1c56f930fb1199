"""Flat ``key=value`` config files."""
from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def parse_config(text: str, allowed=None, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        if allowed is not None and key not in allowed:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in line {raw.strip()!r}")
        out[key] = value.strip()
    return out


def load_config(path, allowed=None) -> dict:
    return parse_config(Path(path).read_text(), allowed, str(path))


def write_config(path, values: dict) -> None:
    lines = [f"{k}={_fmt(v)}" for k, v in values.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return "x".join(str(i) for i in v)
    return str(v)


def coerce(value: str, like):
    """Convert a config string to the type of the default ``like``."""
    if isinstance(like, bool):
        v = value.lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    try:
        if isinstance(like, int):
            return int(value)
        if isinstance(like, float) or like is None:
            return float(value) if value != "" else None
        if isinstance(like, tuple):
            return tuple(int(v) for v in value.split("x")) if value else ()
    except ValueError as exc:
        raise ConfigError(f"bad value {value!r}: {exc}") from None
    return value
