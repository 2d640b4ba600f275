"""Experiment configuration: JSON schema, tolerance defaults, sampling.

Configs are plain JSON objects. Metrics and scalar fields are tagged unions
(``{"kind": ...}``); scalar fields may also be a bare number or an
expression string such as ``"-log(1 + x1**2 + x2**2)"``.

Random samples are drawn per index from ``default_rng([seed, index])`` so
sample ``k`` is the same no matter how the set is split between workers.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from . import fields, metrics
from .errors import ConfigError
from .jets import TangentSample

DEFAULT_TOLERANCES: dict[str, float] = {
    "connection": 1e-9,       # identities of g, C, G, gamma, Gamma at a sample
    "conformal": 1e-9,        # conformal-change predictions vs direct recomputation
    "metric_scaling": 1e-11,  # g-bar = e^{2 phi} g and its inverse
    "mobius": 1e-8,           # max |B_ij| for a Mobius verdict
    "traceless": 1e-9,
    "cocycle": 1e-7,
    "riemannian": 1e-10,      # Riemannian reductions (Osgood-Stowe, y-independence)
    "one_dim": 1e-9,
    "unit_speed": 1e-6,
    "frame": 1e-6,
    "frenet": 1e-4,
    "geodesic_kappa": 1e-5,
    "circle_closure": 1e-5,
    "reference_integrator": 1e-7,
    "projective": 1e-6,
    "projective_q": 1e-5,
    "curvature": 1e-6,
}

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_FIELD = {
    "oneOf": [
        _NUM,
        {"type": "string"},
        {"type": "object", "required": ["kind"], "properties": {"kind": {"type": "string"}}},
    ]
}
_METRIC = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["euclidean", "round_sphere", "riemannian", "conformal", "randers"]},
        "dim": {"type": "integer", "minimum": 2},
        "a": {"oneOf": [{"const": "identity"}, {"type": "array", "items": {"type": "array"}}]},
        "b": {"type": "array"},
        "base": {"type": "object"},
        "phi": _FIELD,
    },
    "additionalProperties": False,
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "metric": _METRIC,
        "phi": _FIELD,
        "sigma": _FIELD,
        "samples": {
            "type": "object",
            "properties": {
                "count": {"type": "integer", "minimum": 1},
                "box": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
            },
            "required": ["count"],
            "additionalProperties": False,
        },
        "sample": {
            "type": "object",
            "properties": {"x": _VEC, "y": _VEC},
            "required": ["x", "y"],
            "additionalProperties": False,
        },
        "tolerances": {"type": "object", "additionalProperties": _NUM},
        "geodesic": {
            "type": "object",
            "properties": {"x0": _VEC, "y0": _VEC, "length": _NUM, "step": _NUM},
            "required": ["x0", "y0", "length"],
            "additionalProperties": False,
        },
        "circle": {
            "type": "object",
            "properties": {"x0": _VEC, "X0": _VEC, "Y0": _VEC, "kappa": _NUM, "length": _NUM, "step": _NUM,
                           "strict_frame": {"type": "boolean"}},
            "required": ["x0", "X0", "Y0", "kappa", "length"],
            "additionalProperties": False,
        },
        "projective": {
            "type": "object",
            "properties": {
                "q": {"oneOf": [_NUM, {"const": "ricci"}]},
                "p0": _NUM, "dp0": _NUM, "d2p0": _NUM,
                "length": _NUM, "step": _NUM,
                "T": {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4},
                "fd_step": _NUM,
            },
            "required": ["length"],
            "additionalProperties": False,
        },
        "suite": {
            "type": "object",
            "properties": {
                "samples": {"type": "integer", "minimum": 1},
                "curve_length": _NUM,
                "only": {"type": "array", "items": {"type": "string"}},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
    "dependentRequired": {"samples": ["seed"]},
}


@dataclass
class ExperimentConfig:
    raw: dict
    tolerances: dict[str, float]

    @property
    def seed(self) -> int | None:
        return self.raw.get("seed")

    def tol(self, name: str) -> float:
        return self.tolerances[name]

    def metric(self) -> metrics.MetricSpec:
        if "metric" not in self.raw:
            raise ConfigError("config needs a 'metric' block")
        return metrics.from_config(self.raw["metric"])

    def field(self, key: str, n: int) -> fields.ScalarField:
        if key not in self.raw:
            raise ConfigError(f"config needs a '{key}' field")
        return fields.from_config(self.raw[key], n)

    def block(self, key: str) -> dict:
        if key not in self.raw:
            raise ConfigError(f"config needs a '{key}' block")
        return self.raw[key]

    def echo(self) -> dict:
        out = copy.deepcopy(self.raw)
        out["tolerances"] = dict(self.tolerances)
        return out


def parse_tol_overrides(items: list[str] | None) -> dict[str, float]:
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--tol expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"--tol value for {name!r} is not a number") from None
    return out


def validate(raw: dict, *, seed: int | None = None, tol_overrides: dict[str, float] | None = None) -> ExperimentConfig:
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["seed"] = int(seed)
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    tolerances = dict(DEFAULT_TOLERANCES)
    for name, value in {**raw.get("tolerances", {}), **(tol_overrides or {})}.items():
        if name not in DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {name!r}")
        if not value > 0:
            raise ConfigError(f"tolerance {name!r} must be positive")
        tolerances[name] = float(value)
    raw.pop("tolerances", None)
    return ExperimentConfig(raw=raw, tolerances=tolerances)


def load(path, *, seed: int | None = None, tol_overrides: dict[str, float] | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return validate(raw, seed=seed, tol_overrides=tol_overrides)


def sample_stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(index)])


def draw_samples(seed: int, n: int, indices, box=(-0.5, 0.5)) -> TangentSample:
    """Tangent samples with x uniform in ``box``^n and y standard normal."""
    lo, hi = float(box[0]), float(box[1])
    xs, ys = [], []
    for k in indices:
        rng = sample_stream(seed, k)
        xs.append(rng.uniform(lo, hi, n))
        y = rng.standard_normal(n)
        while np.linalg.norm(y) < 1e-3:
            y = rng.standard_normal(n)
        ys.append(y)
    return TangentSample(np.array(xs), np.array(ys))
