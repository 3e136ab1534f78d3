"""
Structured plain-text configuration: ``[section]`` headers with
``key = value`` entries. Parsing is strict: unknown sections or keys are
rejected against a per-command schema, and every file must carry
``[meta] schema = advdistill-config-v1``. The same format backs dataset
and run manifests.
"""

from __future__ import annotations

import json

from .io import atomic_write_text

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "parse_config_text",
    "read_config",
    "write_config",
    "validate_config",
    "as_bool",
]

SCHEMA_VERSION = "advdistill-config-v1"


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise ConfigError(f"line {lineno}: empty section name")
            if current in sections:
                raise ConfigError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value
    return sections


def read_config(path: str) -> dict[str, dict[str, str]]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def write_config(path: str, sections: dict[str, dict]) -> None:
    lines = []
    for name, body in sections.items():
        lines.append(f"[{name}]")
        for key, value in body.items():
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{key} = {value}")
        lines.append("")
    atomic_write_text(path, "\n".join(lines))


def as_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _floats(s: str) -> list[float]:
    return [float(p) for p in s.replace(",", " ").split()]


CONVERTERS = {
    "str": str,
    "int": int,
    "float": float,
    "bool": as_bool,
    "floats": _floats,
    "json": json.loads,
}


def validate_config(
    sections: dict[str, dict[str, str]],
    schema: dict[str, dict[str, tuple]],
    open_sections: tuple[str, ...] = (),
) -> dict[str, dict]:
    """Check sections/keys against ``schema`` and convert values.

    ``schema[section][key] = (type_name, required, default)``. Sections in
    ``open_sections`` accept arbitrary keys (kept as strings). The [meta]
    section must declare the supported schema string.
    """
    meta = sections.get("meta")
    if not meta or meta.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"config must declare [meta] schema = {SCHEMA_VERSION}")

    known = set(schema) | set(open_sections) | {"meta"}
    unknown_sections = set(sections) - known
    if unknown_sections:
        raise ConfigError(f"unknown sections: {sorted(unknown_sections)}")

    out: dict[str, dict] = {"meta": dict(meta)}
    for sec_name, keys in schema.items():
        body = sections.get(sec_name, {})
        unknown = set(body) - set(keys)
        if unknown:
            raise ConfigError(f"unknown keys in [{sec_name}]: {sorted(unknown)}")
        parsed: dict = {}
        for key, (type_name, required, default) in keys.items():
            if key in body:
                try:
                    parsed[key] = CONVERTERS[type_name](body[key])
                except (ValueError, json.JSONDecodeError) as err:
                    raise ConfigError(f"[{sec_name}] {key}: {err}") from err
            elif required:
                raise ConfigError(f"missing required key {key!r} in [{sec_name}]")
            else:
                parsed[key] = default
        out[sec_name] = parsed
    for sec_name in open_sections:
        out[sec_name] = dict(sections.get(sec_name, {}))
    return out
