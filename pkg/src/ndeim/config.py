"""Run configuration: a JSON document validated against a strict schema."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Configuration failed to parse or validate."""

    def __init__(self, message, path="$"):
        super().__init__(f"{path}: {message}")
        self.path = path


def _obj(properties, required=()):
    return {"type": "object", "properties": properties, "required": list(required),
            "additionalProperties": False}


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}

_HISTORY = _obj({
    "kind": {"enum": ["constant", "samples", "chart", "random"]},
    "value": _VEC,
    "samples": _MAT,
    "xi": _VEC,
    "amplitude": _POS,
    "seed": {"type": "integer"},
}, required=["kind"])

SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "seed": {"type": "integer"},
    "problem": _obj({
        "rhs": {"enum": ["vdp_neutral", "linear_scalar", "affine", "delayed_exponential"]},
        "r": _POS,
        "params": {"type": "object", "additionalProperties": {"anyOf": [_NUM, _VEC, _MAT]}},
        "neutral": {"type": "array", "items": _obj({
            "matrix": {"anyOf": [_NUM, _VEC, _MAT]},
            "delay": _POS,
        }, required=["matrix"])},
        "kappa_cutoff": _POS,
    }, required=["rhs", "r"]),
    "hypothesis": _obj({
        "name": {"enum": ["H1", "H2"]},
        "M": _NUM,
        "M0": _NUM,
        "Mj": _VEC,
        "k": {"type": "integer"},
        "r0": _NUM,
        "d": _NUM,
        "x_star": {"anyOf": [{"const": "auto"}, _NUM]},
    }, required=["name", "M", "Mj", "k", "r0"]),
    "grid": _obj({
        "h": _POS,
        "steps_per_delay": {"type": "integer", "minimum": 8},
        "window": _POS,
        "tol": _POS,
    }),
    "simulate": _obj({"t_end": _POS, "history": _HISTORY}, required=["t_end"]),
    "manifold": _obj({
        "xi": _MAT,
        "gamma": {"enum": [0, 1]},
        "derivatives": _obj({"base_points": _MAT, "step": _POS}),
    }, required=["xi"]),
    "track": _obj({
        "history": _HISTORY,
        "t_forward": _POS,
        "t_back": _POS,
        "tol": _POS,
    }, required=["history"]),
    "vdp": _obj({
        "b": _NUM,
        "c": _NUM,
        "eps": _NUM,
        "r": _POS,
        "kappa_cutoff": _POS,
        "r_values": {"type": "array", "items": _POS, "minItems": 2},
        "state0": _VEC,
        "steps_per_delay": {"type": "integer", "minimum": 8},
        "t_end": _POS,
        "workers": {"type": "integer", "minimum": 1},
        "bounds": _VEC,
        "sample_points": {"type": "integer", "minimum": 3},
        "manifold": {"type": "boolean"},
        "manifold_r": _POS,
    }),
    "fdb": _obj({
        "points": {"type": "integer", "minimum": 1},
        "max_order": {"type": "integer", "minimum": 1, "maximum": 6},
        "tolerance": _POS,
    }),
    "output": _obj({"dir": {"type": "string"}}),
}, required=["schema_version"])


def _json_path(path_items):
    out = "$"
    for item in path_items:
        out += f"[{item}]" if isinstance(item, int) else f".{item}"
    return out


def validate(data: dict) -> dict:
    """Validate ``data``; raises :class:`ConfigError` naming the offending path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _json_path(err.absolute_path))
    return data


def load(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (line {exc.lineno})") from None
    return validate(data)
