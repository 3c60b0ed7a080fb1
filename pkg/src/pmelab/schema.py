"""Versioned JSON schema for scenario configuration documents."""

from __future__ import annotations

import json

SCHEMA_VERSION = 1

_number_or_auto = {"oneOf": [{"type": "number"}, {"const": "auto"}]}
_dimension = {"oneOf": [{"type": "number"}, {"enum": ["inf", "+inf", "infinity"]}]}

_manifold = {
    "type": "object",
    "required": ["kind", "n", "domain"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["euclidean-radial", "hyperbolic-radial", "sphere-polar", "interval-weighted"]},
        "n": {"type": "integer", "minimum": 2},
        "domain": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "warp": {"type": "object"},
        "weight": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"enum": ["constant", "polynomial", "cos", "quadratic"]},
                "params": {"type": "object"},
            },
        },
    },
}

_curvature = {
    "type": "object",
    "required": ["N", "eps"],
    "additionalProperties": False,
    "properties": {
        "N": _dimension,
        "eps": {"type": "number"},
        "K": _number_or_auto,
        "p1": _number_or_auto,
        "p2": _number_or_auto,
        "region": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    },
}

_problem = {
    "type": "object",
    "required": ["m", "initial", "T", "M"],
    "additionalProperties": False,
    "properties": {
        "mode": {"enum": ["solve", "sample"]},
        "m": {"type": "number", "minimum": 1},
        "initial": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"enum": ["barenblatt", "heat-kernel", "cosine", "gaussian", "constant"]},
                "params": {"type": "object"},
            },
        },
        "t0": {"type": "number"},
        "T": {"type": "number"},
        "M": {"type": "integer", "minimum": 4},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "save_every": {"type": "integer", "minimum": 1},
        "export_csv": {"type": "boolean"},
    },
}

_estimate = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {
            "enum": [
                "local-Thm3.1", "global-Cor3.2", "compact-Thm4.1", "constant-Thm2.2",
                "constant-Cor2.2", "LiYau-2.4/2.5", "classical-AB-2.6",
            ]
        },
        "alpha": {"type": "number", "minimum": 1},
        "R": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"const": "inf"}]},
        "center": {"type": "number"},
        "L": _number_or_auto,
        "delta": {"type": "number", "minimum": 0},
        "band": {"type": "integer", "minimum": 0},
        "t_min": {"type": "number"},
        "t_max": {"type": "number"},
        "tolerance": {"type": "number", "minimum": 0},
        "exact_front": {"type": "boolean"},
        "rhs_scale": {"type": "number", "exclusiveMinimum": 0},
        "export_csv": {"type": "boolean"},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pmelab scenario batch",
    "type": "object",
    "required": ["schema_version", "scenarios"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "scenarios": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "manifold"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
                    "manifold": _manifold,
                    "curvature": _curvature,
                    "problem": _problem,
                    "estimates": {"type": "array", "items": _estimate},
                    "comparison": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {
                            "M": {"type": "integer", "minimum": 4},
                            "region": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                            "tolerance": {"type": "number", "minimum": 0},
                        },
                    },
                    "oracle": {
                        "type": "object",
                        "additionalProperties": False,
                        "properties": {"levels": {"type": "integer", "minimum": 3}},
                    },
                },
            },
        },
    },
}


def dump_schema() -> str:
    return json.dumps(SCHEMA, indent=2, sort_keys=True) + "\n"
