"""Scenario configuration files: JSON schema, loading and parameter overrides.

A configuration describes one problem instance.  ``type`` selects how the
``expressions`` block is read:

``general``
    ``f`` (n), ``g`` (n x m), ``alpha`` (p, over ``xi1..``), ``pi`` (n, over
    ``xi1..``), ``c``, ``beta`` (m), ``phi`` (n - p), and optionally ``R``
    ((n - p) x n, defaults to the Jacobian of ``phi``), ``P`` (constant SPD
    matrix, default identity) and ``rho`` (number or expression, default 1).
``feedback_form``
    ``f1`` (n - 1), ``pi2`` and ``beta``; the gain is the parameter ``k``.
``augmented``
    a ``general`` plant whose controller ``v`` also reads the off-manifold
    coordinates ``z1..``, simulated together with ``z' = Dphi(x) (f + g v)``;
    optional ``closed_form`` expressions in ``t`` and the initial values
    ``x1_0.., z1_0..`` are compared against the simulation.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Mapping

import jsonschema

__all__ = ["SCHEMA", "ConfigError", "ConfigNotFound", "load_config", "validate_config", "apply_overrides", "CHECKS"]

CHECKS = (
    "equilibrium",
    "invariance_pde",
    "implicit_manifold",
    "R_conditions",
    "beta_on_manifold",
    "target_gas",
    "decay_pointwise",
    "decay_matrix",
    "length_decay",
    "boundedness",
    "closed_loop_gas",
    "hyperbolicity",
    "constraint_preserved",
    "closed_form",
)

_vec = {"type": "array", "items": {"type": "number"}}
_box = {
    "type": "array",
    "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
    "minItems": 1,
}
_strs = {"type": "array", "items": {"type": "string"}}
_str_matrix = {"type": "array", "items": _strs}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "horizon-ii scenario",
    "type": "object",
    "required": ["name", "type", "dims", "expressions"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "type": {"enum": ["general", "feedback_form", "augmented"]},
        "dims": {
            "type": "object",
            "required": ["n"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "m": {"type": "integer", "minimum": 1},
                "p": {"type": "integer", "minimum": 0},
            },
        },
        "params": {"type": "object", "additionalProperties": {"type": "number"}},
        "x_star": _vec,
        "xi_star": _vec,
        "expressions": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "f": _strs,
                "g": _str_matrix,
                "alpha": _strs,
                "pi": _strs,
                "c": _strs,
                "phi": _strs,
                "beta": _strs,
                "R": _str_matrix,
                "P": {"oneOf": [{"type": "number"}, {"type": "array", "items": _vec}]},
                "rho": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"type": "string"}]},
                "f1": _strs,
                "pi2": {"type": "string"},
                "v": _strs,
                "closed_form": {"type": "object", "additionalProperties": {"type": "string"}},
            },
        },
        "checks": {"type": "array", "items": {"enum": list(CHECKS)}, "uniqueItems": True},
        "sampling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "box": _box,
                "xi_box": _box,
                "grid": {"type": "integer", "minimum": 2},
                "xi_grid": {"type": "integer", "minimum": 2},
                "random": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "simulation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["rk45", "rk4"]},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "h": {"type": "number", "exclusiveMinimum": 0},
                "initial_states": {"type": "array", "items": _vec},
                "random_initial": {"type": "integer", "minimum": 0},
                "initial_box": _box,
                "target_random": {"type": "integer", "minimum": 0},
                "target_box": _box,
                "gas_tol": {"type": "number", "exclusiveMinimum": 0},
                "times": _vec,
                "z0_offset": {"type": "number"},
            },
        },
        "curves": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "type"],
                "additionalProperties": False,
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "type": {"enum": ["segment", "parametric"]},
                    "a": _vec,
                    "b": _vec,
                    "gamma": _strs,
                    "nodes": {"type": "integer", "minimum": 8},
                },
            },
        },
        "decay": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "times": _vec,
                "rate_tol": {"type": "number", "exclusiveMinimum": 0},
                "zero_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "expectations": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "checks": {"type": "object", "additionalProperties": {"enum": ["pass", "fail", "error"]}},
                "equilibrium": _vec,
            },
        },
    },
}

_REQUIRED = {
    "general": ("f", "g", "alpha", "pi", "c", "phi", "beta"),
    "feedback_form": ("f1", "pi2", "beta"),
    "augmented": ("f", "g", "alpha", "pi", "c", "phi", "v"),
}


class ConfigError(ValueError):
    """Schema or consistency violation; ``errors`` lists ``(field path, message)`` pairs."""

    def __init__(self, errors: list[tuple[str, str]], source: str = "config"):
        self.errors = errors
        self.source = source
        lines = "; ".join(f"{path}: {msg}" for path, msg in errors)
        super().__init__(f"{source}: {lines}")


class ConfigNotFound(FileNotFoundError):
    pass


def _path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate_config(cfg: Mapping, source: str = "config") -> dict:
    """Validate against :data:`SCHEMA` plus the per-type dimension rules."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(validator.iter_errors(cfg), key=lambda e: list(map(str, e.absolute_path)))
    if errs:
        raise ConfigError([(_path(e.absolute_path), e.message) for e in errs], source)
    cfg = copy.deepcopy(dict(cfg))
    problems: list[tuple[str, str]] = []
    kind = cfg["type"]
    ex = cfg["expressions"]
    n = cfg["dims"]["n"]
    for key in _REQUIRED[kind]:
        if key not in ex:
            problems.append((f"$.expressions.{key}", f"required for type {kind!r}"))
    if kind == "feedback_form":
        if len(ex.get("beta", [])) != 1:
            problems.append(("$.expressions.beta", "feedback-form controller has one component"))
        if len(ex.get("f1", [])) != n - 1:
            problems.append(("$.expressions.f1", f"expected {n - 1} components"))
        if "k" not in cfg.get("params", {}):
            problems.append(("$.params.k", "feedback-form scenarios need the gain k"))
    else:
        m = cfg["dims"].get("m")
        p = cfg["dims"].get("p")
        if m is None or p is None:
            problems.append(("$.dims", "m and p are required for this type"))
        else:
            shapes = {"f": n, "alpha": p, "pi": n, "c": m, "phi": n - p, "beta": m, "v": m}
            for key, want in shapes.items():
                if key in ex and len(ex[key]) != want:
                    problems.append((f"$.expressions.{key}", f"expected {want} components, got {len(ex[key])}"))
            if "g" in ex and (len(ex["g"]) != n or any(len(r) != m for r in ex["g"])):
                problems.append(("$.expressions.g", f"expected a {n} x {m} matrix"))
            if "R" in ex and (len(ex["R"]) != n - p or any(len(r) != n for r in ex["R"])):
                problems.append(("$.expressions.R", f"expected a {n - p} x {n} matrix"))
    for key in ("box", "xi_box"):
        want = n if key == "box" else (cfg["dims"].get("p") if kind != "feedback_form" else n - 1)
        box = cfg.get("sampling", {}).get(key)
        if box is not None and len(box) not in (1, want):
            problems.append((f"$.sampling.{key}", f"expected 1 or {want} intervals"))
    for i, c in enumerate(cfg.get("curves", [])):
        if c["type"] == "segment" and not ("a" in c and "b" in c):
            problems.append((f"$.curves[{i}]", "segment needs a and b"))
        if c["type"] == "parametric" and "gamma" not in c:
            problems.append((f"$.curves[{i}]", "parametric curve needs gamma"))
    if problems:
        raise ConfigError(problems, source)
    return cfg


def load_config(source) -> dict:
    """Read and validate a JSON file, or validate an in-memory mapping."""
    if isinstance(source, Mapping):
        return validate_config(source)
    path = Path(source)
    if not path.is_file():
        raise ConfigNotFound(f"config not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError([(f"line {err.lineno}", err.msg)], str(path)) from err
    return validate_config(raw, str(path))


def apply_overrides(cfg: Mapping, params: Mapping[str, float] | None = None, seed: int | None = None) -> dict:
    """Copy of ``cfg`` with parameter values and the sampling seed replaced."""
    out = copy.deepcopy(dict(cfg))
    if params:
        out.setdefault("params", {})
        unknown = [k for k in params if k not in out["params"] and k != "z0_offset"]
        if unknown:
            raise ConfigError([(f"$.params.{k}", "not a parameter of this scenario") for k in unknown], out.get("name", "config"))
        for key, val in params.items():
            if key == "z0_offset":
                out.setdefault("simulation", {})["z0_offset"] = float(val)
            else:
                out["params"][key] = float(val)
    if seed is not None:
        out.setdefault("sampling", {})["seed"] = int(seed)
    return validate_config(out, out.get("name", "config"))
