"""Shipped scenarios: JSON configs in this directory plus thin parametric builders.

Each builder loads the shipped file and overrides parameters, so the CLI
(which loads the same files by name) and library callers run identical
configurations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

from ..config import ConfigNotFound, apply_overrides, validate_config

__all__ = [
    "Scenario",
    "available",
    "load",
    "scenario_worked_example",
    "scenario_counterexample",
    "scenario_extended_system",
]


@dataclass(frozen=True)
class Scenario:
    name: str
    config: dict

    @property
    def expectations(self) -> dict:
        return self.config.get("expectations", {})

    @property
    def params(self) -> dict:
        return dict(self.config.get("params", {}))


def available() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files(__name__).iterdir() if p.name.endswith(".json"))


def load(name: str, **params: float) -> Scenario:
    """Shipped scenario ``name`` with optional parameter overrides."""
    res = resources.files(__name__) / f"{name}.json"
    if not res.is_file():
        raise ConfigNotFound(f"no shipped scenario named {name!r}; available: {', '.join(available())}")
    cfg = validate_config(json.loads(res.read_text()), f"scenario {name}")
    if params:
        cfg = apply_overrides(cfg, params)
    return Scenario(cfg["name"], cfg)


def scenario_worked_example(lam: float = 1.0, k: float = 2.0) -> Scenario:
    if not (lam > 0 and k > 0):
        raise ValueError("lambda and k must be positive")
    return load("worked-example", **{"lambda": lam, "k": k})


def scenario_counterexample(theta: float = 1.0, corrected: bool = False) -> Scenario:
    if theta == 0:
        raise ValueError("theta must be nonzero")
    return load("counterexample-corrected" if corrected else "counterexample", theta=theta)


def scenario_extended_system(theta: float = 1.0, z0_offset: float = 0.0, corrected: bool = True) -> Scenario:
    name = "extended-system" if z0_offset == 0 else "extended-system-offset"
    return load(name, theta=theta, corrected=float(corrected), z0_offset=z0_offset)
