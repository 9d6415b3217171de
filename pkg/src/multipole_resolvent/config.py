"""Declarative experiment configs: schema, digest and builders.

A config is a YAML (or JSON) tree.  Only the scientific content enters the
digest; `threads` and the `output` block are runtime settings and are left
out so that changing them cannot change any artifact.
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import yaml

from .cutoffs import Cutoff
from .errors import ConfigError
from .potential import (AngularTable, Pole, PotentialSpec, barrier_well, custom_table, inverse_square,
                        log_squared, radial_background, zero_background)
from .resolvent import CartesianPolicy, RadialModePolicy

RUNTIME_KEYS = ("threads", "output")

_num = {"type": "number"}
_point = {"type": "array", "items": _num, "minItems": 2, "maxItems": 3}
_cutoff = {
    "type": "object",
    "required": ["r_in", "r_out"],
    "properties": {"core": {"type": "array", "items": _point, "minItems": 1},
                   "r_in": {"type": "number", "minimum": 0}, "r_out": {"type": "number", "exclusiveMinimum": 0}},
    "additionalProperties": False,
}

SCHEMA: dict = {
    "type": "object",
    "required": ["potential"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "threads": {"type": "integer", "minimum": 1},
        "allow_violations": {"type": "boolean"},
        "potential": {
            "type": "object",
            "required": ["dimension"],
            "additionalProperties": False,
            "properties": {
                "dimension": {"type": "integer", "minimum": 2, "maximum": 3},
                "hardy_constant": _num,
                "bound_constant": {"type": "number", "exclusiveMinimum": 0},
                "gradient_constant": {"type": "number", "exclusiveMinimum": 0},
                "poles": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["position", "profile", "cutoff"],
                        "additionalProperties": False,
                        "properties": {
                            "position": _point,
                            "profile": {"enum": ["inverse_square", "inverse_square_angular",
                                                 "log_squared_counterexample", "custom_table"]},
                            "coefficient": _num,
                            "angular_table": {"type": "array", "items": _num, "minItems": 4},
                            "table": {"type": "object", "required": ["r", "V"],
                                      "properties": {"r": {"type": "array", "items": _num, "minItems": 2},
                                                     "V": {"type": "array", "items": _num, "minItems": 2}},
                                      "additionalProperties": False},
                            "cutoff": {"type": "number", "exclusiveMinimum": 0},
                            "taper": {"type": "number", "minimum": 0},
                        },
                    },
                },
                "background": {
                    "type": "object",
                    "required": ["profile"],
                    "additionalProperties": False,
                    "properties": {
                        "profile": {"enum": ["zero", "barrier_well", "custom_table"]},
                        "support_radius": {"type": "number", "minimum": 0},
                        "depth": _num, "height": _num,
                        "r_well": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                        "r_barrier": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                        "table": {"type": "object", "required": ["r", "V"]},
                    },
                },
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lambdas": {"type": "array", "items": {"type": "number", "minimum": 4}, "minItems": 1},
                "lambda_min": {"type": "number", "minimum": 4},
                "lambda_max": {"type": "number", "minimum": 4},
                "lambda_count": {"type": "integer", "minimum": 1},
                "epsilon": {"type": "object", "required": ["policy", "value"],
                            "properties": {"policy": {"enum": ["relative", "absolute"]},
                                           "value": {"type": "number", "exclusiveMinimum": 0}},
                            "additionalProperties": False},
                "sign": {"enum": [1, -1]},
                "window": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "geometry": {
                    "type": "object",
                    "required": ["kind", "chi"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"enum": ["cartesian", "radial_modes"]},
                        "ppw": {"type": "number", "minimum": 10},
                        "gap": {"type": "number", "minimum": 0},
                        "chi": _cutoff,
                        "chi1": _cutoff,
                        "nu_factor": {"type": "number", "exclusiveMinimum": 0},
                        "sectors": {"enum": ["auto", "none", "require"]},
                    },
                },
            },
        },
        "diagnostics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "husimi": {"type": "boolean"},
                "flux": {"type": "boolean"},
                "weighted_norms": {"type": "boolean"},
                "mode_split": {"type": "boolean"},
                "lambdas": {"type": "array", "items": {"type": "number", "minimum": 4}},
                "ppw": {"type": "number", "minimum": 10},
                "nu_tilde": {"type": "number", "minimum": 0},
                "forcing": {"type": "object",
                            "properties": {"center": _point, "r_in": {"type": "number", "minimum": 0},
                                           "r_out": {"type": "number", "exclusiveMinimum": 0},
                                           "n_waves": {"type": "integer", "minimum": 1}},
                            "additionalProperties": False},
                "symbol": {"type": "object", "required": ["centre", "radius"],
                           "properties": {"centre": _point, "radius": {"type": "number", "exclusiveMinimum": 0}},
                           "additionalProperties": False},
                "cone_half_angle_deg": {"type": "number", "exclusiveMinimum": 0, "maximum": 90},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "cache": {"type": "boolean"}},
        },
    },
}


def load_config(path) -> dict:
    """Read a YAML/JSON config file and validate it."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: Any) -> None:
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    sw = cfg.get("sweep", {})
    if "lambdas" not in sw and any(k in sw for k in ("lambda_min", "lambda_max", "lambda_count")):
        if not all(k in sw for k in ("lambda_min", "lambda_max", "lambda_count")):
            raise ConfigError("lambda_min, lambda_max and lambda_count go together")
    for j, p in enumerate(cfg["potential"].get("poles", [])):
        if len(p["position"]) != cfg["potential"]["dimension"]:
            raise ConfigError(f"pole {j}: position does not match the dimension")
        if p["profile"] == "custom_table" and "table" not in p:
            raise ConfigError(f"pole {j}: custom_table needs a table")
        if p["profile"] == "inverse_square_angular" and "angular_table" not in p:
            raise ConfigError(f"pole {j}: inverse_square_angular needs an angular_table")
        if p["profile"] != "custom_table" and "coefficient" not in p:
            raise ConfigError(f"pole {j}: coefficient is required")


def scientific_content(cfg: dict) -> dict:
    out = copy.deepcopy(cfg)
    for k in RUNTIME_KEYS:
        out.pop(k, None)
    return out


def config_digest(cfg: dict) -> str:
    """sha256 of the canonical JSON of the scientific content."""
    blob = json.dumps(scientific_content(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# builders


def _pole(p: dict) -> Pole:
    prof = p["profile"]
    ang = None
    if prof == "inverse_square":
        rp = inverse_square(p["coefficient"])
    elif prof == "inverse_square_angular":
        rp = inverse_square(p["coefficient"])
        ang = AngularTable.from_array(p["angular_table"])
    elif prof == "log_squared_counterexample":
        rp = log_squared(p["coefficient"])
    else:
        rp = custom_table(p["table"]["r"], p["table"]["V"])
    return Pole(tuple(p["position"]), rp, float(p["cutoff"]), ang, p.get("taper"))


def _background(b: dict, d: int):
    prof = b["profile"]
    if prof == "zero":
        return zero_background(d)
    if prof == "barrier_well":
        kw = {k: b[k] for k in ("depth", "height") if k in b}
        for k in ("r_well", "r_barrier"):
            if k in b:
                kw[k] = tuple(b[k])
        return barrier_well(d=d, **kw)
    tab = custom_table(b["table"]["r"], b["table"]["V"])
    support = float(b.get("support_radius", max(b["table"]["r"])))
    return radial_background("custom_table", tab, support, d=d)


def build_potential(cfg: dict) -> PotentialSpec:
    pc = cfg["potential"]
    d = int(pc["dimension"])
    poles = tuple(_pole(p) for p in pc.get("poles", []))
    if "hardy_constant" in pc:
        a = float(pc["hardy_constant"])
    elif poles:
        a = min(float(p.get("coefficient", 0.0)) for p in pc["poles"])
    else:
        a = 0.0
    bg = _background(pc["background"], d) if "background" in pc else zero_background(d)
    kw = {k: float(pc[k]) for k in ("bound_constant", "gradient_constant") if k in pc}
    return PotentialSpec(d, poles, bg, a, **kw)


def build_cutoff(c: dict, d: int = 2) -> Cutoff:
    core = c.get("core", [[0.0] * d])
    return Cutoff.around(core, c["r_in"], c["r_out"])


def lambda_grid(sweep: dict):
    if "lambdas" in sweep:
        return [float(v) for v in sweep["lambdas"]]
    lo, hi, n = float(sweep["lambda_min"]), float(sweep["lambda_max"]), int(sweep["lambda_count"])
    if n == 1:
        return [lo]
    return [float(f"{v:.12g}") for v in np.geomspace(lo, hi, n)]


def eps_policy(sweep: dict):
    e = sweep.get("epsilon", {"policy": "relative", "value": 1e-6})
    return (e["policy"], float(e["value"]))


def build_geometry(cfg: dict):
    sw = cfg.get("sweep", {})
    g = sw.get("geometry")
    if g is None:
        raise ConfigError("sweep.geometry is required for a sweep")
    d = cfg["potential"]["dimension"]
    chi = build_cutoff(g["chi"], d)
    chi1 = build_cutoff(g["chi1"], d) if "chi1" in g else None
    if g["kind"] == "cartesian":
        return CartesianPolicy(chi, chi1, ppw=float(g.get("ppw", 10.0)), gap=float(g.get("gap", 0.05)),
                               sectors=g.get("sectors", "auto"))
    return RadialModePolicy(chi, chi1, ppw=float(g.get("ppw", 10.0)), gap=float(g.get("gap", 0.1)),
                            nu_factor=float(g.get("nu_factor", 1.5)))


def parse_eps_policy(text: str):
    """CLI form: 'relative:1e-6' or 'absolute:0.01' (a bare number means relative)."""
    if ":" in text:
        kind, val = text.split(":", 1)
        kind = kind.strip().lower()
        if kind not in ("relative", "absolute"):
            raise ConfigError(f"unknown epsilon policy {kind!r}")
        return (kind, float(val))
    v = float(text)
    if not math.isfinite(v) or v <= 0:
        raise ConfigError("epsilon must be positive")
    return ("relative", v)
