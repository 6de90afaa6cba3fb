"""Flat key=value config files.

One `key = value` pair per line, `#` starts a comment. Every key corresponds
to a dataclass field and can be overridden from the command line by a flag of
the same name. Parsing collects all problems instead of stopping at the first
so a bad config is reported exhaustively.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import get_args, get_origin

__all__ = [
    "ConfigError",
    "read_flat_config",
    "write_flat_config",
    "dataclass_to_mapping",
    "build_dataclass",
    "split_known_keys",
]


class ConfigError(ValueError):
    pass


def read_flat_config(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    mapping: dict[str, str] = {}
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in mapping:
            raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
        mapping[key] = value.strip()
    return mapping


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def dataclass_to_mapping(instance) -> dict[str, str]:
    return {f.name: _format_value(getattr(instance, f.name)) for f in dataclasses.fields(instance)}


def write_flat_config(instance_or_mapping, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mapping = (
        instance_or_mapping
        if isinstance(instance_or_mapping, dict)
        else dataclass_to_mapping(instance_or_mapping)
    )
    lines = [f"{key} = {_format_value(value)}" for key, value in mapping.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def _parse_scalar(text: str, target_type):
    if target_type is bool:
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    return target_type(text)


def _field_type(f: dataclasses.Field):
    t = f.type
    if isinstance(t, str):
        # Evaluate the common annotations used by this package's configs.
        known = {"int": int, "float": float, "bool": bool, "str": str,
                 "int | None": int, "float | None": float}
        if t in known:
            return known[t], t.endswith("| None")
        raise ConfigError(f"unsupported config field annotation {t!r}")
    if get_origin(t) is not None:  # e.g. int | None
        args = [a for a in get_args(t) if a is not type(None)]
        return args[0], True
    return t, False


def build_dataclass(cls, mapping: dict[str, str], errors: list[str]):
    """Instantiate `cls` from string values; problems append to `errors`."""
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in mapping:
            continue
        text = mapping[f.name]
        base, optional = _field_type(f)
        if optional and text == "":
            kwargs[f.name] = None
            continue
        try:
            kwargs[f.name] = _parse_scalar(text, base)
        except (ValueError, TypeError):
            errors.append(f"{f.name}: cannot parse {text!r} as {base.__name__}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        errors.append(str(exc))
        return None


def split_known_keys(mapping: dict[str, str], *dataclass_types) -> tuple[dict[str, dict[str, str]], list[str]]:
    """Partition a flat mapping by which dataclass owns each key."""
    owners: dict[str, dict[str, str]] = {cls.__name__: {} for cls in dataclass_types}
    field_owner = {}
    for cls in dataclass_types:
        for f in dataclasses.fields(cls):
            field_owner.setdefault(f.name, cls.__name__)
    unknown = []
    for key, value in mapping.items():
        owner = field_owner.get(key)
        if owner is None:
            unknown.append(key)
        else:
            owners[owner][key] = value
    return owners, unknown
