"""Run configuration: JSON schema, validation, and defaults.

Unknown keys are rejected so typos fail loudly before any work starts.
"""

from __future__ import annotations

import copy
import json

import jsonschema

from .errors import ConfigError

SCHEMA_VERSION = 1

DEFAULT_CONFIG = {
    "intrinsics": {
        "fx": 500.0,
        "fy": 500.0,
        "cx": 320.0,
        "cy": 240.0,
        "width": 640,
        "height": 480,
    },
    "scene": {"preset": "floor", "texture_seed": 0},
    "sequence": {
        "kind": "straight",
        "n_frames": 200,
        "frame_rate": 10.0,
        "pixel_noise_sigma": 0.1,
        "landmark_count": 500,
        "outlier_fraction": 0.1,
        "outlier_factor_range": [1.5, 3.0],
        "seed": 0,
        "start": [0.0, 0.0, 0.0],
        "direction": [1.0, 0.0, 0.0],
        "step": 0.15,
    },
    "provider": {
        "affine_scale": 1.7,
        "affine_shift": 0.3,
        "noise_sigma": 0.05,
        "outlier_fraction": 0.0,
        "outlier_factor_range": [1.5, 3.0],
        "seed": 0,
    },
    "filter": {"enabled": True, "sigma": "adaptive", "min_set_size": 10},
    "keyframe": {"translation_factor": 0.15, "max_gap": 60},
    "mapping": {"delta_factor": 0.05, "gamma": 0.05, "voxel_factor": 0.02},
}

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NON_NEGATIVE = {"type": "number", "minimum": 0}
_FRACTION = {"type": "number", "minimum": 0, "exclusiveMaximum": 1}
_FACTOR_RANGE = {
    "type": "array",
    "items": {"type": "number", "exclusiveMinimum": 1},
    "minItems": 2,
    "maxItems": 2,
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "intrinsics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fx": _POSITIVE,
                "fy": _POSITIVE,
                "cx": _NON_NEGATIVE,
                "cy": _NON_NEGATIVE,
                "width": {"type": "integer", "minimum": 1},
                "height": {"type": "integer", "minimum": 1},
            },
        },
        "scene": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": ["box", "plane", "heightfield", "floor"]},
                "texture_seed": {"type": "integer"},
            },
        },
        "sequence": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["straight", "orbit", "random-walk"]},
                "n_frames": {"type": "integer", "minimum": 2},
                "frame_rate": _POSITIVE,
                "pixel_noise_sigma": _NON_NEGATIVE,
                "landmark_count": {"type": "integer", "minimum": 1},
                "outlier_fraction": _FRACTION,
                "outlier_factor_range": _FACTOR_RANGE,
                "seed": {"type": "integer"},
                "step": _POSITIVE,
                "orbit_radius": _POSITIVE,
                "orbit_arc_deg": _POSITIVE,
                "start": {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 3,
                    "maxItems": 3,
                },
                "direction": {
                    "type": "array",
                    "items": {"type": "number"},
                    "minItems": 3,
                    "maxItems": 3,
                },
            },
        },
        "provider": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "affine_scale": _POSITIVE,
                "affine_shift": {"type": "number"},
                "noise_sigma": _NON_NEGATIVE,
                "outlier_fraction": _FRACTION,
                "outlier_factor_range": _FACTOR_RANGE,
                "seed": {"type": "integer"},
            },
        },
        "filter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "enabled": {"type": "boolean"},
                "sigma": {
                    "anyOf": [{"type": "number", "minimum": 0}, {"const": "adaptive"}]
                },
                "min_set_size": {"type": "integer", "minimum": 2},
            },
        },
        "keyframe": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "translation_factor": _POSITIVE,
                "max_gap": {"type": "integer", "minimum": 1},
            },
        },
        "mapping": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "delta_factor": _POSITIVE,
                "gamma": _POSITIVE,
                "voxel_factor": _POSITIVE,
            },
        },
    },
}


def _merge(defaults: dict, overrides: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate_config(raw: dict) -> dict:
    """Validate a partial config and merge it over the defaults."""
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config at {list(exc.absolute_path)}: {exc.message}")
    merged = _merge(DEFAULT_CONFIG, raw)
    merged.pop("schema_version", None)
    return merged


def load_config(path) -> dict:
    try:
        with open(path) as f:
            raw = json.load(f)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        )
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return validate_config(raw)
