"""Control-affine plants, target systems, immersion data and their flows."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import ode
from .linalg import jacobi_eigh, left_annihilator
from .maps import ConstMap, ExprMap, FuncMap, Map, as_array, jacobian as _jacobian, jvp, state_symbols
from .results import CERTIFIED, ConditionResult
from .ode import Trajectory

__all__ = [
    "ControlAffineSystem",
    "TargetSystem",
    "ImmersionData",
    "ProlongedState",
    "ClosedLoop",
    "Trajectory",
    "closed_loop_field",
    "jacobian",
    "integrate",
    "integrate_prolonged",
    "check_equilibrium_consistency",
    "write_trajectory_csv",
    "EQ_TOL",
]

EQ_TOL = 1e-8
DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class ControlAffineSystem:
    """``x' = f(x) + g(x) u`` with ``f``: R^n -> R^n and ``g``: R^n -> R^{n x m}."""

    f: Map
    g: Map
    x_star: np.ndarray
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        n = self.f.in_dim
        if self.f.shape != (n,):
            raise ValueError(f"f must map R^{n} to R^{n}, has shape {self.f.shape}")
        if len(self.g.shape) != 2 or self.g.shape[0] != n or self.g.in_dim != n:
            raise ValueError(f"g must be an {n} x m matrix over R^{n}, has shape {self.g.shape}")
        object.__setattr__(self, "x_star", np.asarray(self.x_star, dtype=float).reshape(n))

    @property
    def n(self) -> int:
        return self.f.in_dim

    @property
    def m(self) -> int:
        return self.g.shape[1]

    @classmethod
    def from_strings(cls, f: Sequence[str], g: Sequence[Sequence[str]], params=None, x_star=None):
        n = len(f)
        xs = state_symbols(n)
        params = dict(params or {})
        return cls(
            ExprMap(list(f), xs, params),
            ExprMap([list(row) for row in g], xs, params),
            np.zeros(n) if x_star is None else x_star,
            params,
        )


@dataclass(frozen=True)
class TargetSystem:
    """Target dynamics ``xi' = alpha(xi)`` of dimension ``p``."""

    alpha: Map
    xi_star: np.ndarray

    def __post_init__(self):
        p = self.alpha.in_dim
        if self.alpha.shape != (p,):
            raise ValueError("alpha must map R^p to R^p")
        object.__setattr__(self, "xi_star", np.asarray(self.xi_star, dtype=float).reshape(p))

    @property
    def p(self) -> int:
        return self.alpha.in_dim

    @classmethod
    def from_strings(cls, alpha: Sequence[str], params=None, xi_star=None):
        p = len(alpha)
        return cls(ExprMap(list(alpha), state_symbols(p, "xi"), dict(params or {})), np.zeros(p) if xi_star is None else xi_star)


def _grad_phi_map(phi: Map) -> Map:
    n = phi.in_dim
    return FuncMap(lambda x: _jacobian(phi, x), n, (phi.out_dim, n), label="grad(phi)")


@dataclass(frozen=True)
class ImmersionData:
    """Maps of the I&I construction plus the horizontal-contraction data.

    ``pi``: R^p -> R^n, ``c``, ``beta``: R^n -> R^m, ``phi``: R^n -> R^{n-p},
    ``R``: R^n -> R^{(n-p) x n} (defaults to the Jacobian of ``phi``),
    ``P``: constant SPD matrix, ``rho``: positive scalar map or constant.
    """

    pi: Map
    c: Map
    phi: Map
    beta: Map
    P: np.ndarray
    R: Map | None = None
    rho: Map | float = 1.0

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        q = self.phi.out_dim
        if P.shape != (q, q):
            raise ValueError(f"P must be {q} x {q}, got {P.shape}")
        if not np.allclose(P, P.T, atol=1e-12):
            raise ValueError("P must be symmetric")
        if jacobi_eigh(P)[0][0] <= 0.0:
            raise ValueError("P must be positive definite")
        object.__setattr__(self, "P", P)
        if self.R is None:
            object.__setattr__(self, "R", _grad_phi_map(self.phi))
        if self.R.shape != (q, self.phi.in_dim):
            raise ValueError(f"R must be {q} x {self.phi.in_dim}, got {self.R.shape}")
        if self.pi.shape != (self.phi.in_dim,):
            raise ValueError("pi must map into the plant state space")

    @property
    def p(self) -> int:
        return self.pi.in_dim

    @property
    def n(self) -> int:
        return self.phi.in_dim

    def rho_at(self, x) -> float:
        if isinstance(self.rho, Map):
            return float(np.ravel(self.rho.value(x))[0])
        return float(self.rho)


@dataclass
class ProlongedState:
    x: np.ndarray
    delta_x: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.x, self.delta_x])

    @classmethod
    def split(cls, y) -> "ProlongedState":
        y = np.asarray(y, dtype=float)
        n = y.size // 2
        return cls(y[:n].copy(), y[n:].copy())


class ClosedLoop(Map):
    """Vector field ``x -> f(x) + g(x) beta(x)``."""

    def __init__(self, sys: ControlAffineSystem, beta: Map):
        if beta.in_dim != sys.n or beta.shape != (sys.m,):
            raise ValueError(f"controller must map R^{sys.n} to R^{sys.m}, has shape {beta.shape}")
        self.sys = sys
        self.beta = beta
        self.in_dim = sys.n
        self.shape = (sys.n,)

    def __call__(self, x) -> np.ndarray:
        u = self.beta(x)
        gx = self.sys.g(x)
        return as_array(list(self.sys.f(x) + gx @ u))

    def describe(self):
        return {"f": self.sys.f.describe(), "g": self.sys.g.describe(), "beta": self.beta.describe()}


def closed_loop_field(sys: ControlAffineSystem, beta: Map) -> ClosedLoop:
    return ClosedLoop(sys, beta)


def jacobian(field: Map, x) -> np.ndarray:
    """Exact Jacobian of ``field`` at ``x`` (rows are component gradients)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("jacobian requested at a non-finite point")
    return np.asarray(field.jacobian(x), dtype=float)


def _solve_kwargs(method: str, tol, h):
    if method == "rk45":
        atol, rtol = (tol, tol) if np.isscalar(tol) else tol
        return {"atol": float(atol), "rtol": float(rtol)}
    if method == "rk4":
        return {"h": float(h)}
    raise ValueError(f"unknown method {method!r}")


def integrate(
    field: Map,
    x0,
    t_span,
    method: str = "rk45",
    tol=DEFAULT_TOL,
    *,
    h: float = 0.01,
    t_eval=None,
    max_steps: int = 1_000_000,
) -> Trajectory:
    """Flow of ``x' = field(x)`` from ``x0`` over ``t_span``."""

    def rhs(t, x):
        return field.value(x)

    return ode.solve(rhs, t_span, x0, method, t_eval=t_eval, max_steps=max_steps, **_solve_kwargs(method, tol, h))


def integrate_prolonged(
    field: Map,
    x0,
    delta_x0,
    t_span,
    method: str = "rk45",
    tol=DEFAULT_TOL,
    *,
    h: float = 0.01,
    t_eval=None,
    max_steps: int = 1_000_000,
) -> Trajectory:
    """Joint flow of ``x' = F(x)`` and ``dx' = DF(x) dx``.

    States are stacked as ``[x, dx]``; the variational part uses the exact
    directional derivative of ``field`` at the current ``x``.
    """
    n = field.in_dim
    y0 = np.concatenate([np.asarray(x0, dtype=float).ravel(), np.asarray(delta_x0, dtype=float).ravel()])
    if y0.size != 2 * n:
        raise ValueError("x0 and delta_x0 must both have the field's dimension")

    def rhs(t, y):
        val, der = jvp(field, y[:n], y[n:])
        return np.concatenate([np.asarray(val, dtype=float), np.asarray(der, dtype=float)])

    traj = ode.solve(rhs, t_span, y0, method, t_eval=t_eval, max_steps=max_steps, **_solve_kwargs(method, tol, h))
    traj.meta["prolonged"] = True
    return traj


def check_equilibrium_consistency(
    sys: ControlAffineSystem, target: TargetSystem, imm: ImmersionData, tol: float = EQ_TOL
) -> ConditionResult:
    """Residuals of ``alpha(xi*) = 0``, ``pi(xi*) = x*`` and the closed-loop equilibrium at ``x*``."""
    x_star, xi_star = sys.x_star, target.xi_star
    parts = []
    r_alpha = float(np.linalg.norm(target.alpha.value(xi_star)))
    parts.append(ConditionResult("target_equilibrium", r_alpha, tol, xi_star.tolist()))
    r_pi = float(np.linalg.norm(imm.pi.value(xi_star) - x_star))
    parts.append(ConditionResult("pi_maps_equilibrium", r_pi, tol, xi_star.tolist()))
    cl = ClosedLoop(sys, imm.beta).value(x_star)
    parts.append(ConditionResult("closed_loop_equilibrium", float(np.linalg.norm(cl)), tol, x_star.tolist()))
    details = {}
    if sys.m < sys.n:
        gperp = left_annihilator(sys.g.value(x_star))
        r_assign = float(np.linalg.norm(gperp @ sys.f.value(x_star)))
        parts.append(ConditionResult("assignable_equilibrium", r_assign, tol, x_star.tolist()))
        details["g_perp"] = gperp.tolist()
    return ConditionResult.combine("equilibrium", parts, kind=CERTIFIED, **details)


def write_trajectory_csv(traj: Trajectory, path, prolonged: bool | None = None, columns: Sequence[str] | None = None) -> Path:
    """Write ``t,x1,...,xn[,dx1,...,dxn]`` rows with 17 significant digits.

    ``columns`` overrides the state column names (e.g. for augmented states).
    """
    path = Path(path)
    if prolonged is None:
        prolonged = bool(traj.meta.get("prolonged"))
    width = traj.states.shape[1] if traj.states.ndim == 2 else 0
    n = width // 2 if prolonged else width
    header = ["t"] + [f"x{i + 1}" for i in range(n)]
    if prolonged:
        header += [f"dx{i + 1}" for i in range(n)]
    if columns is not None:
        if len(columns) != width:
            raise ValueError(f"{len(columns)} column names for {width} state components")
        header = ["t"] + list(columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, row in zip(traj.times, traj.states):
            w.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])
    return path


def constant(value, in_dim: int) -> ConstMap:
    return ConstMap(value, in_dim)
