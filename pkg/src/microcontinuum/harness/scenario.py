"""Scenario files: strict JSON schema, defaults and loading."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from ..errors import ParseError, RegimeFieldMissing, SchemaError

SCHEMA_VERSION = "1.0"
REGIMES = ("free", "scs", "gnr", "material", "voids", "mixture", "variational")

_number = {"type": "number"}
_posint = {"type": "integer", "minimum": 1}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


FLOW_SCHEMA = _obj({
    "kind": {"enum": ["rigid_translation", "rigid_rotation", "polynomial", "micro_polynomial"]},
    "count": _posint,
    "degree": {"type": "integer", "minimum": 0, "maximum": 3},
    "scale": _number,
}, required=["kind"])

SIMULATION_SCHEMA = _obj({
    "n_nodes": {"type": "integer", "minimum": 3},
    "length": _number,
    "rho0": _number,
    "kappa": _number,
    "cF": _number,
    "cnu": _number,
    "cg": _number,
    "beta": _number,
    "nu_ref": _number,
    "dt": _number,
    "steps": _posint,
    "inertia_form": {"enum": ["printed", "kinetic-consistent"]},
    "initial": _obj({"family": {"enum": ["uniform", "cosine", "stretch_pulse", "rest"]},
                     "amplitude": _number}),
    "cfl_safety": _number,
    "refinement_levels": {"type": "integer", "minimum": 0, "maximum": 4},
})

VARIATIONAL_SCHEMA = _obj({
    "n": {"type": "integer", "minimum": 5},
    "dt": _number,
    "levels": {"type": "integer", "minimum": 3},
    "steps": {"type": "integer", "minimum": 0},
})

SCENARIO_SCHEMA = _obj({
    "schema_version": {"const": SCHEMA_VERSION},
    "name": {"type": "string"},
    "regime": {"enum": list(REGIMES)},
    "seed": {"type": "integer", "minimum": 0},
    "grid": _obj({"dim": {"type": "integer", "minimum": 1, "maximum": 3}, "n": {"type": "integer", "minimum": 5},
                  "dt": _number}),
    "charts": _obj({"ambient": {"enum": ["euclidean", "sphere"]}}),
    "motion": _obj({"family": {"enum": ["manufactured"]}, "params": _obj({"scale": _number})}),
    "model": _obj({"model": {"type": "string"}, "coeffs": {"type": "object"}}),
    "flows": {"type": "array", "items": FLOW_SCHEMA},
    "tolerances": {"type": "object", "additionalProperties": _number},
    "inject": _obj({"law": {"type": "string"}, "amplitude": _number}, required=["law"]),
    "simulation": SIMULATION_SCHEMA,
    "variational": VARIATIONAL_SCHEMA,
}, required=["schema_version", "name", "regime"])

# fields each regime cannot run without
REGIME_REQUIRED = {
    "voids": (("simulation", "dt"),),
}

DEFAULTS = {"seed": 0, "flows": [], "tolerances": {}}


@dataclass(frozen=True)
class Scenario:
    name: str
    regime: str
    seed: int = 0
    data: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.data.get(key, default)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def with_seed(self, seed: int) -> "Scenario":
        data = self.to_dict()
        data["seed"] = int(seed)
        return Scenario(self.name, self.regime, int(seed), data)


def _path_of(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(data) -> Scenario:
    """Validate a parsed scenario mapping, fill defaults, and check regime fields."""
    if not isinstance(data, dict):
        raise SchemaError("scenario must be a JSON object")
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            raise SchemaError(f"unknown key(s) {extra} at {_path_of(err)}")
        raise SchemaError(f"{_path_of(err)}: {err.message}")
    for section, key in REGIME_REQUIRED.get(data["regime"], ()):
        if key not in data.get(section, {}):
            raise RegimeFieldMissing(key)
    full = {**copy.deepcopy(DEFAULTS), **copy.deepcopy(data)}
    return Scenario(full["name"], full["regime"], int(full["seed"]), full)


def load_scenario(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON in {path}: {exc}") from exc
    return validate(data)


def default_scenario(regime: str, seed: int = 0) -> dict:
    """A minimal passing scenario for ``regime``."""
    if regime not in REGIMES:
        raise SchemaError(f"unknown regime {regime!r}")
    data = {"schema_version": SCHEMA_VERSION, "name": f"{regime}-default", "regime": regime, "seed": seed}
    if regime == "free":
        data["flows"] = [{"kind": "polynomial", "count": 3, "degree": 2, "scale": 0.3},
                         {"kind": "micro_polynomial", "count": 1, "degree": 2, "scale": 0.3}]
    elif regime == "gnr":
        data["flows"] = [{"kind": "rigid_translation"}, {"kind": "rigid_rotation"}]
    elif regime == "voids":
        data["simulation"] = {"n_nodes": 65, "dt": 2e-3, "steps": 2000, "cnu": 64.0, "kappa": 0.5,
                              "inertia_form": "kinetic-consistent",
                              "initial": {"family": "uniform", "amplitude": 1e-3}}
    elif regime == "variational":
        data["variational"] = {"n": 7, "dt": 2e-3, "levels": 5, "steps": 100}
    return data
