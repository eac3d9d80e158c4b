"""Result records shared by all checks, and the certificate report."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__

__all__ = ["ConditionResult", "CertificateReport", "CERTIFIED", "EMPIRICAL", "PARTIAL", "jsonable"]

CERTIFIED = "certified-on-samples"
EMPIRICAL = "empirical"
PARTIAL = "partial"

REPORT_VERSION = 1


def jsonable(obj):
    """Convert numpy / complex / tuple values into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


@dataclass
class ConditionResult:
    """Outcome of one check over a sample set.

    ``passed`` is always ``worst_residual <= tol``.  Composite checks carry
    their sub-results in ``parts``; their own residual is the worst
    normalised part residual (``part.worst_residual / part.tol``) against
    ``tol = 1``.
    """

    name: str
    worst_residual: float
    tol: float
    worst_point: Sequence[float] | None = None
    kind: str = CERTIFIED
    details: dict = field(default_factory=dict)
    parts: list["ConditionResult"] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.worst_residual <= self.tol)

    @classmethod
    def combine(cls, name: str, parts: Sequence["ConditionResult"], kind: str | None = None, **details):
        worst, point = -math.inf, None
        for p in parts:
            if p.tol > 0:
                r = p.worst_residual / p.tol
            else:
                r = math.inf if p.worst_residual > 0 else (0.0 if p.worst_residual == 0 else -math.inf)
            if r > worst:
                worst, point = r, p.worst_point
        if kind is None:
            kinds = {p.kind for p in parts}
            kind = CERTIFIED if kinds == {CERTIFIED} else (EMPIRICAL if EMPIRICAL in kinds else PARTIAL)
        return cls(name, worst if parts else 0.0, 1.0, point, kind, dict(details), list(parts))

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "passed": self.passed,
            "worst_residual": self.worst_residual,
            "tol": self.tol,
            "worst_point": None if self.worst_point is None else [float(v) for v in np.ravel(self.worst_point)],
            "kind": self.kind,
            "details": self.details,
        }
        if self.parts:
            d["parts"] = [p.to_dict() for p in self.parts]
        return jsonable(d)

    def __str__(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: worst={self.worst_residual:.3e} tol={self.tol:.1e} ({self.kind})"


@dataclass
class CertificateReport:
    scenario: str
    params: dict
    seed: int | None
    results: list[ConditionResult] = field(default_factory=list)
    trajectories: dict = field(default_factory=dict)
    eigenvalues: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    version: str = __version__

    def add(self, result: ConditionResult, seconds: float | None = None) -> ConditionResult:
        self.results.append(result)
        if seconds is not None:
            self.timing[result.name] = seconds
        return result

    def __getitem__(self, name: str) -> ConditionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def outcomes(self) -> dict[str, str]:
        out = {r.name: ("pass" if r.passed else "fail") for r in self.results}
        out.update({k: "error" for k in self.errors})
        return out

    @property
    def verdict(self) -> str:
        if self.errors:
            return "error"
        return "pass" if all(r.passed for r in self.results) else "fail"

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "report_version": REPORT_VERSION,
            "toolkit_version": self.version,
            "scenario": self.scenario,
            "params": self.params,
            "seed": self.seed,
            "verdict": self.verdict,
            "checks": [r.to_dict() for r in self.results],
            "errors": self.errors,
            "trajectories": self.trajectories,
            "eigenvalues": self.eigenvalues,
        }
        if include_timing:
            d["wall_clock_s"] = self.timing
        return jsonable(d)

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)

    def summary(self) -> str:
        lines = [f"scenario {self.scenario} params={self.params} seed={self.seed}"]
        lines += [f"  {r}" for r in self.results]
        lines += [f"  [ERROR] {k}: {v}" for k, v in self.errors.items()]
        lines.append(f"verdict: {self.verdict}")
        return "\n".join(lines)
