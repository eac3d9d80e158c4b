"""Linearisation at the fixed points and hyperbolicity of the closed-loop equilibrium.

With ``S = D alpha(xi*)``, ``Pi = D pi(xi*)``, ``A`` the Jacobian of the
closed loop at ``x*`` and ``R0 = R(x*)``, the manifold-function identity
``phi(pi(xi)) = 0`` together with ``R = D phi`` on the manifold forces
``R0 Pi = 0``.  Any ``x~`` then splits as ``Pi xi~ + R0^T e`` and the
closed-loop linearisation inherits the spectrum of ``S`` on the tangent
directions; :func:`check_hyperbolic` reports both spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ClosedLoop, ControlAffineSystem, ImmersionData, TargetSystem, jacobian
from .linalg import ConvergenceError, eig_general, jacobi_eigh, spectral_abscissa
from .results import CERTIFIED, ConditionResult

__all__ = [
    "LinearizationData",
    "LinearizationError",
    "linearize_all",
    "e_coordinate",
    "decompose",
    "check_hyperbolic",
    "fit_decay_rate",
    "HYPERBOLIC_TOL",
    "ORTHO_TOL",
]

HYPERBOLIC_TOL = 1e-8
ORTHO_TOL = 1e-10
RANK_TOL = 1e-10


class LinearizationError(ValueError):
    pass


@dataclass(frozen=True)
class LinearizationData:
    S: np.ndarray
    Pi: np.ndarray
    A: np.ndarray
    R0: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        for name in ("S", "Pi", "A", "R0", "P0"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        p, n = self.S.shape[0], self.A.shape[0]
        if self.Pi.shape != (n, p) or self.R0.shape != (n - p, n):
            raise LinearizationError(
                f"inconsistent shapes: S {self.S.shape}, Pi {self.Pi.shape}, A {self.A.shape}, R0 {self.R0.shape}"
            )
        gram = self.R0 @ self.R0.T
        if gram.size and jacobi_eigh(gram)[0][0] <= RANK_TOL * max(1.0, float(np.max(np.abs(gram)))):
            raise LinearizationError("R0 R0^T is singular: R(x*) is not full row rank")

    @property
    def orthogonality_residual(self) -> float:
        return float(np.max(np.abs(self.R0 @ self.Pi), initial=0.0))


def linearize_all(sys: ControlAffineSystem, target: TargetSystem, imm: ImmersionData) -> LinearizationData:
    """Exact Jacobians at ``xi*`` and ``x*``; raises :class:`LinearizationError` on rank failure."""
    xi_star, x_star = target.xi_star, sys.x_star
    S = jacobian(target.alpha, xi_star)
    Pi = jacobian(imm.pi, xi_star)
    A = jacobian(ClosedLoop(sys, imm.beta), x_star)
    R0 = np.atleast_2d(np.asarray(imm.R.value(x_star), dtype=float))
    return LinearizationData(S, Pi, A, R0, imm.P)


def e_coordinate(ld: LinearizationData, x_tilde) -> np.ndarray:
    """``(R0 R0^T)^{-1} R0 x~``."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    return np.linalg.solve(ld.R0 @ ld.R0.T, ld.R0 @ x_tilde)


def decompose(ld: LinearizationData, x_tilde) -> tuple[np.ndarray, np.ndarray]:
    """``(xi~, e)`` with ``xi~ = (Pi^T Pi)^{-1} Pi^T x~`` and ``e`` from :func:`e_coordinate`."""
    x_tilde = np.asarray(x_tilde, dtype=float)
    xi = np.linalg.solve(ld.Pi.T @ ld.Pi, ld.Pi.T @ x_tilde)
    return xi, e_coordinate(ld, x_tilde)


def _pairs(eigs) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in eigs]


def check_hyperbolic(
    ld: LinearizationData,
    contraction_passed: bool | None = None,
    equilibrium: ConditionResult | None = None,
    tol: float = HYPERBOLIC_TOL,
) -> ConditionResult:
    """Spectra of ``S`` and ``A``; passes iff ``max Re eig(A) < -tol``.

    The residual is ``max Re eig(A) + tol`` against 0.  Whether the transfer
    from ``S`` to ``A`` applies (``S`` Hurwitz and contraction certified) is
    recorded separately, as is the outcome of the equilibrium check: a
    Hurwitz ``A`` at a point that is not the closed-loop equilibrium says
    nothing about ``x*``.
    """
    details: dict = {"tol": tol, "orthogonality_residual": ld.orthogonality_residual}
    try:
        eig_S = eig_general(ld.S)
        eig_A = eig_general(ld.A)
    except ConvergenceError as err:
        details["error"] = str(err)
        return ConditionResult("hyperbolicity", math.inf, 0.0, None, CERTIFIED, details)
    abs_S, abs_A = spectral_abscissa(eig_S), spectral_abscissa(eig_A)
    hyp_S = bool(np.all(np.abs(eig_S.real) > tol))
    hyp_A = bool(np.all(np.abs(eig_A.real) > tol))
    applicable = hyp_S and abs_S < -tol and contraction_passed is not False
    details.update(
        {
            "eig_S": _pairs(eig_S),
            "eig_A": _pairs(eig_A),
            "abscissa_S": abs_S,
            "abscissa_A": abs_A,
            "S_hyperbolic": hyp_S,
            "A_hyperbolic": hyp_A,
            "claim_applicable": applicable,
            "orthogonality_ok": ld.orthogonality_residual <= ORTHO_TOL,
        }
    )
    if contraction_passed is not None:
        details["contraction_passed"] = bool(contraction_passed)
    if equilibrium is not None:
        details["equilibrium_passed"] = equilibrium.passed
    return ConditionResult("hyperbolicity", abs_A + tol, 0.0, None, CERTIFIED, details)


def fit_decay_rate(times, states, x_star, floor: float = 1e-9, tail: float = 0.5) -> float:
    """Least-squares slope of ``log |x(t) - x*|`` over the last ``tail`` fraction of samples.

    Samples closer than ``floor`` to ``x*`` are dropped (integration noise);
    ``nan`` if fewer than two remain.
    """
    times = np.asarray(times, dtype=float)
    dist = np.linalg.norm(np.asarray(states, dtype=float) - np.asarray(x_star, dtype=float), axis=1)
    keep = (times >= times[0] + (1 - tail) * (times[-1] - times[0])) & (dist > floor)
    if np.count_nonzero(keep) < 2:
        return math.nan
    return float(np.polyfit(times[keep], np.log(dist[keep]), 1)[0])
