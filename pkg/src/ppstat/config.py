"""Experiment configs: schema validation, defaults, and hashing.

Configs are plain JSON.  Validation happens before any computation and
rejects unknown fields outright; the resolved effective config (seed
override applied, replicate counts scaled, defaults filled) is hashed so
runs can be tied to exactly what they executed.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import jsonschema

from .core import PPStatError, RngSpec
from .generators import GeneratorSpec

COMMANDS = ("generate", "match", "percolate", "diagnose", "palm")
FORMATS = ("csv", "json", "svg")


class ConfigError(PPStatError):
    """Config file violates the schema or is semantically unusable."""


_WINDOW_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "kind": {"const": "box"},
                "bounds": {
                    "type": "array", "minItems": 1, "maxItems": 3,
                    "items": {"type": "array", "minItems": 2, "maxItems": 2,
                              "items": {"type": "number"}},
                },
            },
            "required": ["kind", "bounds"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "disc"},
                "center": {"type": "array", "minItems": 2, "maxItems": 2,
                           "items": {"type": "number"}},
                "radius": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["kind", "center", "radius"],
            "additionalProperties": False,
        },
    ]
}

_METRIC_SCHEMA = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"kind": {"enum": ["euclidean", "hyperbolic-disc"]}},
            "required": ["kind"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "kind": {"const": "toroidal"},
                "periods": {"type": "array", "minItems": 1, "maxItems": 3,
                            "items": {"type": "number", "exclusiveMinimum": 0}},
            },
            "required": ["kind", "periods"],
            "additionalProperties": False,
        },
    ]
}

_PERTURBATION_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["zero", "gaussian", "uniform-ball", "heavy-tail"]},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_GENERATOR_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["poisson", "shifted-lattice", "site-percolation",
                          "perturbed-lattice", "doubled-perturbed-lattice",
                          "column-deleted-stack", "gaf-planar",
                          "gaf-hyperbolic"]},
        "window": _WINDOW_SCHEMA,
        "metric": _METRIC_SCHEMA,
        "intensity": {"type": "number", "exclusiveMinimum": 0},
        "p": {"type": "number", "minimum": 0, "maximum": 1},
        "perturbation": _PERTURBATION_SCHEMA,
        "shift": {"type": "boolean"},
        "pair_radius": {"type": "number", "exclusiveMinimum": 0},
        "rho": {"type": "number", "exclusiveMinimum": 0},
        "rmax": {"type": "number", "exclusiveMinimum": 0},
        "palm": {"type": "boolean"},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_PARAMS_SCHEMAS = {
    "generate": {
        "type": "object",
        "properties": {"reps": {"type": "integer", "minimum": 1}},
        "additionalProperties": False,
    },
    "match": {
        "type": "object",
        "properties": {
            "mode": {"enum": ["one-colour", "two-colour"]},
            "reps": {"type": "integer", "minimum": 1},
            "boundary_margin": {"type": "number", "minimum": 0},
        },
        "required": ["mode"],
        "additionalProperties": False,
    },
    "percolate": {
        "type": "object",
        "properties": {
            "radius": {"type": "number", "exclusiveMinimum": 0},
            "reps": {"type": "integer", "minimum": 1},
            "spanning": {"enum": ["opposite", "all-faces"]},
            "m_radius": {"type": "number", "exclusiveMinimum": 0},
        },
        "required": ["radius"],
        "additionalProperties": False,
    },
    "diagnose": {
        "type": "object",
        "properties": {
            "scales": {"type": "array", "minItems": 2,
                       "items": {"type": "number", "exclusiveMinimum": 0}},
            "reps": {"type": "integer", "minimum": 2},
            "probe_radius": {"type": "number", "exclusiveMinimum": 0},
        },
        "additionalProperties": False,
    },
    "palm": {
        "type": "object",
        "properties": {
            "reps": {"type": "integer", "minimum": 1},
            "ball_radius": {"type": "number", "exclusiveMinimum": 0},
        },
        "additionalProperties": False,
    },
}

_PARAM_DEFAULTS = {
    "generate": {"reps": 1},
    "match": {"reps": 50, "boundary_margin": 0.0},
    "percolate": {"reps": 50, "spanning": "opposite"},
    "diagnose": {"reps": 200, "probe_radius": 0.5},
    "palm": {"reps": 1000, "ball_radius": 2.0},
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "command": {"enum": list(COMMANDS)},
        "seed": {"type": "integer", "minimum": 0},
        "stream": {"type": "integer", "minimum": 0},
        "generator": _GENERATOR_SCHEMA,
        "generator_b": _GENERATOR_SCHEMA,
        "params": {"type": "object"},
        "out": {"type": "string", "minLength": 1},
        "formats": {"type": "array", "minItems": 1, "uniqueItems": True,
                    "items": {"enum": list(FORMATS)}},
    },
    "required": ["command", "seed", "generator"],
    "additionalProperties": False,
    "allOf": [
        {"if": {"properties": {"command": {"const": c}},
                "required": ["command"]},
         "then": {"properties": {"params": s}}}
        for c, s in _PARAMS_SCHEMAS.items()
    ],
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated, fully resolved experiment description."""

    command: str
    rng: RngSpec
    generator: GeneratorSpec
    generator_b: GeneratorSpec | None
    params: dict
    out_dir: str | None
    formats: tuple[str, ...]
    workers: int = 1
    effective: dict = field(default_factory=dict, compare=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.effective)

    def wants(self, fmt: str) -> bool:
        return fmt in self.formats


def config_hash(effective: dict) -> str:
    """sha256 of the canonical JSON form of the effective config."""
    blob = json.dumps(effective, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _scaled_reps(reps: int, reps_scale: float, floor: int) -> int:
    return max(floor, math.ceil(reps * reps_scale))


def resolve_config(raw: dict, *, seed_override: int | None = None,
                   reps_scale: float = 1.0, out_override: str | None = None,
                   workers: int = 1) -> ExperimentConfig:
    """Validate a raw config dict and resolve it into an ExperimentConfig.

    The seed override (CLI environment) replaces the config seed; the
    reps multiplier rescales replicate counts for smoke runs, clamped to
    each command's minimum.  Both are folded into the effective config
    before hashing.
    """
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "config"
        raise ConfigError(f"{where}: {e.message}")
    if not reps_scale > 0:
        raise ConfigError(f"reps-scale must be positive, got {reps_scale}")
    command = raw["command"]
    params = dict(_PARAM_DEFAULTS[command])
    params.update(raw.get("params", {}))
    # defaults carry no required fields, so re-check the merged params
    merged_errors = sorted(
        jsonschema.Draft202012Validator(_PARAMS_SCHEMAS[command])
        .iter_errors(params), key=lambda e: list(e.path))
    if merged_errors:
        raise ConfigError(f"params: {merged_errors[0].message}")
    if "reps" in params:
        floor = 2 if command == "diagnose" else 1
        params["reps"] = _scaled_reps(params["reps"], reps_scale, floor)
    try:
        generator = GeneratorSpec.from_dict(raw["generator"])
        generator_b = (GeneratorSpec.from_dict(raw["generator_b"])
                       if "generator_b" in raw else None)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"generator: {exc}") from exc
    if command == "match" and params["mode"] == "two-colour" and generator_b is None:
        raise ConfigError("two-colour match needs generator_b")
    if command != "match" and generator_b is not None:
        raise ConfigError(f"generator_b is only meaningful for match, not {command}")
    seed = int(seed_override) if seed_override is not None else raw["seed"]
    rng = RngSpec(seed, raw.get("stream", 0))
    formats = tuple(sorted(raw.get("formats", FORMATS)))
    out_dir = out_override if out_override is not None else raw.get("out")

    effective = {
        "command": command,
        "seed": seed,
        "stream": rng.stream,
        "generator": generator.to_dict(),
        "params": params,
        "formats": list(formats),
    }
    if generator_b is not None:
        effective["generator_b"] = generator_b.to_dict()
    return ExperimentConfig(command=command, rng=rng, generator=generator,
                            generator_b=generator_b, params=params,
                            out_dir=out_dir, formats=formats, workers=workers,
                            effective=effective)


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a JSON config file and resolve it (see resolve_config)."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return resolve_config(raw, **overrides)
