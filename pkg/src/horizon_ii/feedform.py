"""Systems in feedback form ``x1' = f(x1, x2)``, ``x2' = u`` with scalar ``x2``.

Given a virtual control ``pi2(x1)`` that stabilises ``x1' = f(x1, pi2(x1))``,
:func:`build_immersion` assembles the target system, immersion, manifold
function and contraction data; :func:`check_feedback_form` then checks the three
sufficient conditions for a user-supplied controller ``beta``.

State symbols are ``x1 .. x{n1}`` for the ``x1`` block and ``x{n1+1}`` for
the scalar ``x2``; in the planar case these are simply ``x1`` and ``x2``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dynamics import ClosedLoop, ControlAffineSystem, ImmersionData, TargetSystem
from .expr import BinOp, Expr, Sym, parse, substitute
from .iandi import SampleSet, check_beta_on_manifold, check_closed_loop_gas, check_target_gas_empirical
from .contraction import check_decay_matrix_inequality
from .maps import ExprMap, FuncMap, Map, as_array, jacobian, state_symbols
from .results import CertificateReport

__all__ = ["FeedbackFormSystem", "build_immersion", "build_M", "build_Q", "M_map", "Q_map", "check_feedback_form", "check_prop3"]


@dataclass(frozen=True)
class FeedbackFormSystem:
    n1: int
    f1: tuple[str, ...]
    pi2: str
    beta: str
    k: float
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.n1 < 1 or len(self.f1) != self.n1:
            raise ValueError(f"f1 must have n1={self.n1} components")
        if not self.k > 0:
            raise ValueError("k must be positive")
        object.__setattr__(self, "f1", tuple(str(e) for e in self.f1))
        object.__setattr__(self, "params", dict(self.params))
        decl = self.x_symbols + tuple(self.params)
        for e in self.f1:
            parse(e, decl)
        parse(self.beta, decl)
        parse(self.pi2, self.x_symbols[: self.n1] + tuple(self.params))

    @property
    def n(self) -> int:
        return self.n1 + 1

    @property
    def x_symbols(self) -> tuple[str, ...]:
        return state_symbols(self.n1 + 1)

    @property
    def xi_symbols(self) -> tuple[str, ...]:
        return state_symbols(self.n1, "xi")

    def system(self) -> ControlAffineSystem:
        f = list(self.f1) + ["0"]
        g = [["0"]] * self.n1 + [["1"]]
        return ControlAffineSystem.from_strings(f, g, self.params, np.zeros(self.n))

    def beta_map(self) -> ExprMap:
        return ExprMap([self.beta], self.x_symbols, self.params)

    def pi2_map(self) -> ExprMap:
        return ExprMap([self.pi2], self.x_symbols[: self.n1], self.params)

    def closed_loop(self) -> ClosedLoop:
        return ClosedLoop(self.system(), self.beta_map())


def build_immersion(ffs: FeedbackFormSystem) -> tuple[TargetSystem, ImmersionData]:
    """Target ``xi' = f(xi, pi2(xi))``, ``pi = (xi, pi2(xi))``, ``c = Dpi2 . f(x1, pi2(x1))``,
    ``phi = x2 - pi2(x1)``, ``R = Dphi``, ``P = 1``, ``rho = k``."""
    n1, params = ffs.n1, dict(ffs.params)
    xs, xis = ffs.x_symbols, ffs.xi_symbols
    pnames = tuple(params)
    pi2_x = parse(ffs.pi2, xs[:n1] + pnames)
    to_xi = {xs[i]: Sym(xis[i]) for i in range(n1)}
    pi2_xi = substitute(pi2_x, to_xi, xis + pnames)

    f1 = [parse(e, xs + pnames) for e in ffs.f1]
    on_manifold = {**to_xi, xs[n1]: pi2_xi.node}
    alpha = [substitute(e, on_manifold, xis + pnames) for e in f1]
    target = TargetSystem(ExprMap(alpha, xis, params), np.zeros(n1))

    pi = ExprMap([parse(s, xis + pnames) for s in xis] + [pi2_xi], xis, params)
    phi = ExprMap([Expr(BinOp("-", Sym(xs[n1]), pi2_x.node), xs + pnames)], xs, params)

    alpha_x = ExprMap([substitute(e, {xs[n1]: pi2_x.node}, xs[:n1] + pnames) for e in f1], xs[:n1], params)
    pi2_map = ffs.pi2_map()

    def c_fn(x):
        x1 = x[:n1]
        grad = jacobian(pi2_map, x1)[0]
        return as_array([grad @ alpha_x(x1)])

    c = FuncMap(c_fn, ffs.n, 1, label=f"grad({ffs.pi2}) . f(x1, pi2(x1))")
    imm = ImmersionData(pi=pi, c=c, phi=phi, beta=ffs.beta_map(), P=np.eye(1), R=None, rho=float(ffs.k))
    return target, imm


def build_M(ffs: FeedbackFormSystem, x1) -> np.ndarray:
    """Block matrix ``[[g g^T, -g], [-g^T, 1]]`` with ``g = Dpi2(x1)^T``."""
    g = np.asarray(jacobian(ffs.pi2_map(), np.asarray(x1, dtype=float).ravel())[0], dtype=float)
    n = ffs.n
    M = np.empty((n, n))
    M[:-1, :-1] = np.outer(g, g)
    M[:-1, -1] = -g
    M[-1, :-1] = -g
    M[-1, -1] = 1.0
    return M


def M_map(ffs: FeedbackFormSystem) -> Map:
    """``M`` as a differentiable map of the full state (depends on ``x1`` only)."""
    pi2 = ffs.pi2_map()
    n1, n = ffs.n1, ffs.n

    def fn(x):
        g = jacobian(pi2, x[:n1])[0]
        row = np.empty(n, dtype=object)
        row[:n1] = -g
        row[n1] = 1.0
        return np.outer(row, row)

    return FuncMap(fn, n, (n, n), label=f"M(x1) for pi2={ffs.pi2}")


def build_Q(ffs: FeedbackFormSystem, x) -> np.ndarray:
    """Jacobian of the closed loop ``(f1(x), beta(x))``."""
    return np.asarray(ffs.closed_loop().jacobian(np.asarray(x, dtype=float)), dtype=float)


def Q_map(ffs: FeedbackFormSystem) -> Map:
    cl = ffs.closed_loop()
    return FuncMap(lambda x: jacobian(cl, x), ffs.n, (ffs.n, ffs.n), label="Q(x)")


def check_feedback_form(
    ffs: FeedbackFormSystem,
    x_samples: SampleSet,
    xi_samples: SampleSet,
    gas_samples: SampleSet | None = None,
    horizon: float = 20.0,
    closed_loop_tol: float = 1e-3,
    name: str = "feedback_form",
    seed: int | None = None,
) -> CertificateReport:
    """(a) target GAS (simulated), (b) decay matrix inequality, (c) ``beta`` on the manifold,
    plus simulated closed-loop convergence."""
    target, imm = build_immersion(ffs)
    report = CertificateReport(name, {**ffs.params, "k": ffs.k}, seed)
    field = ffs.closed_loop()

    t0 = time.perf_counter()
    report.add(check_target_gas_empirical(target, xi_samples, horizon), time.perf_counter() - t0)
    t0 = time.perf_counter()
    report.add(check_decay_matrix_inequality(M_map(ffs), Q_map(ffs), ffs.k, field, x_samples), time.perf_counter() - t0)
    t0 = time.perf_counter()
    report.add(check_beta_on_manifold(imm, xi_samples), time.perf_counter() - t0)
    if gas_samples is not None:
        t0 = time.perf_counter()
        report.add(check_closed_loop_gas(field, np.zeros(ffs.n), gas_samples, horizon, closed_loop_tol), time.perf_counter() - t0)
    return report


check_prop3 = check_feedback_form  # alternate public name
