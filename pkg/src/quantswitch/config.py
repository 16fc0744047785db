"""JSON run configuration: schema validation and model construction."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import jsonschema

from .model import (SwitchingModel, affine_model, constant_costs, gbm_model, linear_gain, linear_profit,
                    power_profit, zero_gain)

_POS = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_VEC = {"type": "array", "items": {"type": "number"}}
_MAT = {"type": "array", "items": _VEC}

_PROFIT = {
    "type": "object",
    "oneOf": [
        {"properties": {"kind": {"const": "power"}, "k": _VEC, "gamma": _VEC, "beta": {"type": "number"}},
         "required": ["kind", "k", "gamma"], "additionalProperties": False},
        {"properties": {"kind": {"const": "linear"}, "intercept": _VEC, "slope": _MAT,
                        "beta": {"type": "number"}},
         "required": ["kind", "intercept", "slope"], "additionalProperties": False},
    ],
}
_TERMINAL = {
    "type": "object",
    "oneOf": [
        {"properties": {"kind": {"const": "zero"}}, "required": ["kind"], "additionalProperties": False},
        {"properties": {"kind": {"const": "linear"}, "intercept": _VEC, "slope": _MAT},
         "required": ["kind", "intercept", "slope"], "additionalProperties": False},
    ],
}
_BENCH_PARAMS = {
    "type": "object",
    "properties": {"b": {"type": "number"}, "sigma": _POS, "beta": _POS, "k": _VEC, "gamma": _VEC,
                   "c01": _POS, "c10": _POS, "x0": _POS, "T": _POS},
    "additionalProperties": False,
}
_MODEL = {
    "type": "object",
    "required": ["family"],
    "properties": {
        "family": {"enum": ["benchmark_gbm", "gbm", "affine"]},
        "params": _BENCH_PARAMS,
        "d": _POS_INT, "q": _POS_INT, "T": _POS,
        "drift": _VEC, "vol": _VEC,
        "drift_const": _MAT, "drift_matrix": {"type": "array", "items": _MAT},
        "vol_matrix": {"type": "array", "items": _MAT},
        "profit": _PROFIT, "terminal": _TERMINAL, "costs": _MAT,
    },
    "additionalProperties": False,
}
SCHEMA = {
    "type": "object",
    "properties": {
        "model": _MODEL,
        "x0": {"oneOf": [{"type": "number"}, _VEC]},
        "seed": {"type": "integer", "minimum": 0},
        "markovian": {
            "type": "object",
            "properties": {"m": _POS_INT, "delta": _POS, "R": _POS, "r_mult": _POS, "n_quant": _POS_INT,
                           "center": _VEC, "quantizer_file": {"type": "string"}},
            "required": ["m", "delta", "n_quant"],
            "additionalProperties": False,
        },
        "marginal": {
            "type": "object",
            "properties": {"m": _POS_INT, "nbar": _POS_INT, "n_train": _POS_INT, "n_mc": _POS_INT,
                           "max_iters": _POS_INT, "tree_file": {"type": "string"}},
            "required": ["m", "nbar"],
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}, "surface_csv": {"type": "boolean"},
                           "tree_file": {"type": "boolean"}},
            "additionalProperties": False,
        },
    },
    "required": ["model"],
    "additionalProperties": False,
}

_DEFAULTS = {"seed": 0, "output": {"dir": "quantswitch-out", "surface_csv": False, "tree_file": False}}


class ConfigError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class RunConfig:
    data: dict

    @property
    def scheme(self) -> str:
        return "markovian" if "markovian" in self.data else "marginal"

    @property
    def params(self) -> dict:
        return self.data[self.scheme]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    @property
    def output(self) -> dict:
        return self.data["output"]

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def x0(self) -> list:
        x0 = self.data.get("x0")
        if x0 is None:
            model = self.data["model"]
            if model["family"] == "benchmark_gbm":
                x0 = model.get("params", {}).get("x0", 3.0)
            else:
                x0 = [0.0] * model.get("d", 1)
        return [float(x0)] if isinstance(x0, (int, float)) else [float(v) for v in x0]


def _path(err) -> str:
    loc = ".".join(str(p) for p in err.absolute_path)
    return loc or "<root>"


def validate_dict(data) -> list[str]:
    errors = []
    validator = jsonschema.Draft202012Validator(SCHEMA)
    for err in sorted(validator.iter_errors(data), key=lambda e: list(map(str, e.absolute_path))):
        errors.append(f"{_path(err)}: {err.message}")
    if isinstance(data, dict):
        n_schemes = sum(k in data for k in ("markovian", "marginal"))
        if n_schemes != 1:
            errors.append("exactly one scheme block ('markovian' or 'marginal') is required")
        mk = data.get("markovian")
        if isinstance(mk, dict) and "R" in mk and "r_mult" in mk:
            errors.append("markovian: give either R or r_mult, not both")
        model = data.get("model")
        if isinstance(model, dict) and model.get("family") in ("gbm", "affine"):
            for key in ("d", "q", "T", "costs", "profit", "terminal"):
                if key not in model:
                    errors.append(f"model.{key}: required for family {model['family']!r}")
    return errors


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON config; raises :class:`ConfigError` listing every violation."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<root>: invalid JSON ({exc})"]) from exc
    errors = validate_dict(data)
    if errors:
        raise ConfigError(errors)
    full = copy.deepcopy(data)
    full.setdefault("seed", _DEFAULTS["seed"])
    full["output"] = {**_DEFAULTS["output"], **full.get("output", {})}
    return RunConfig(full)


def build_model(block: dict) -> tuple[SwitchingModel, object]:
    """Model for a config ``model`` block plus the closed-form solution for the benchmark family."""
    family = block["family"]
    if family == "benchmark_gbm":
        from .benchmark import GBMSwitchParams, benchmark_model
        p = dict(block.get("params", {}))
        for key in ("k", "gamma"):
            if key in p:
                p[key] = tuple(p[key])
        params = GBMSwitchParams(**p)
        return benchmark_model(params)
    d, q, T = block["d"], block["q"], block["T"]
    prof = block["profit"]
    if prof["kind"] == "power":
        f = power_profit(prof["k"], prof["gamma"], prof.get("beta", 0.0))
    else:
        f = linear_profit(prof["intercept"], prof["slope"], prof.get("beta", 0.0))
    term = block["terminal"]
    g = zero_gain if term["kind"] == "zero" else linear_gain(term["intercept"], term["slope"])
    c = constant_costs(block["costs"])
    if family == "gbm":
        return gbm_model(d, q, block.get("drift", [0.0] * q), block.get("vol", [0.0] * q), f, g, c, T), None
    return affine_model(d, q, block.get("drift_const", [[0.0] * d] * q),
                        block.get("drift_matrix", [[[0.0] * d] * d] * q),
                        block.get("vol_matrix", [[[0.0] * d] * d] * q), f, g, c, T), None
