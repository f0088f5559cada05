"""Nested experiment configuration with strict key checking."""

from __future__ import annotations

import copy
import json


class ConfigError(ValueError):
    pass


def merge(base: dict, override: dict, path="") -> dict:
    """Recursively apply ``override`` onto a copy of ``base``; unknown keys fail."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigError(f"unknown configuration key '{where}'")
        if isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be an object")
            out[key] = merge(out[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_value(text: str):
    """JSON literal if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_assignment(item: str) -> dict:
    """``"a.b.c=1"`` -> ``{"a": {"b": {"c": 1}}}``."""
    if "=" not in item:
        raise ConfigError(f"expected key=value, got '{item}'")
    key, _, value = item.partition("=")
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"malformed key '{key}'")
    node = parse_value(value)
    for part in reversed(parts):
        node = {part: node}
    return node


def load_file(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def check_types(defaults: dict, resolved: dict, path=""):
    """Reject values whose JSON type differs from the default's."""
    for key, default in defaults.items():
        value = resolved[key]
        where = f"{path}{key}"
        if isinstance(default, dict):
            check_types(default, value, where + ".")
        elif isinstance(default, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"'{where}' must be a boolean")
        elif isinstance(default, (int, float)) and not isinstance(default, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"'{where}' must be a number")
            if isinstance(default, int) and not isinstance(value, int):
                if float(value).is_integer():
                    resolved[key] = int(value)
                else:
                    raise ConfigError(f"'{where}' must be an integer")
        elif isinstance(default, list):
            if not isinstance(value, list):
                raise ConfigError(f"'{where}' must be a list")
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise ConfigError(f"'{where}' must be a string")
