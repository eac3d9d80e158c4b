"""Checks of the classical I&I conditions and the manifold-restriction conditions.

Each check evaluates a residual over a :class:`SampleSet` and returns a
:class:`~horizon_ii.results.ConditionResult` holding the worst residual and
the sample where it occurred.  Sample-based checks certify the condition on
the samples only; simulation-based checks are labelled empirical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import dual as D
from .dynamics import ControlAffineSystem, ImmersionData, TargetSystem, integrate
from .maps import Map, jacobian
from .ode import IntegrationError
from .results import CERTIFIED, EMPIRICAL, PARTIAL, ConditionResult

__all__ = [
    "SampleSet",
    "default_samples",
    "check_invariance_pde",
    "check_implicit_manifold",
    "check_R_conditions",
    "check_beta_on_manifold",
    "check_target_gas_empirical",
    "check_closed_loop_gas",
    "check_boundedness",
    "RESIDUAL_TOL",
    "RANK_RTOL",
]

RESIDUAL_TOL = 1e-10
RANK_RTOL = 1e-6
N_STARTS = 5


@dataclass
class SampleSet:
    """Points in a box, on a grid, drawn at random, or taken from trajectories."""

    points: np.ndarray
    strategy: str
    box: tuple[tuple[float, float], ...] | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.box is not None:
            lo = np.array([b[0] for b in self.box])
            hi = np.array([b[1] for b in self.box])
            if np.any(self.points < lo - 1e-12) or np.any(self.points > hi + 1e-12):
                raise ValueError("sample points fall outside the declared box")

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @classmethod
    def grid(cls, box, counts) -> "SampleSet":
        box = _as_box(box)
        counts = [counts] * len(box) if np.isscalar(counts) else list(counts)
        axes = [np.linspace(lo, hi, int(c)) for (lo, hi), c in zip(box, counts)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=-1)
        return cls(pts, "grid", box, {"counts": [int(c) for c in counts]})

    @classmethod
    def random(cls, box, count: int, seed: int) -> "SampleSet":
        box = _as_box(box)
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in box])
        hi = np.array([b[1] for b in box])
        pts = lo + (hi - lo) * rng.random((int(count), len(box)))
        return cls(pts, "random", box, {"count": int(count), "seed": int(seed)})

    @classmethod
    def trajectory(cls, trajectories) -> "SampleSet":
        pts = np.concatenate([np.atleast_2d(tr.states) for tr in trajectories], axis=0)
        return cls(pts, "trajectory", None, {"n_trajectories": len(trajectories)})


def _as_box(box) -> tuple[tuple[float, float], ...]:
    out = tuple((float(lo), float(hi)) for lo, hi in box)
    for lo, hi in out:
        if not hi >= lo:
            raise ValueError(f"invalid box interval [{lo}, {hi}]")
    return out


def default_samples(dim: int, box=None, seed: int = 0, grid_points: int = 21, random_count: int = 1000) -> SampleSet:
    """Grid of ``grid_points`` per axis for dim <= 3, seeded random points otherwise."""
    box = box if box is not None else [(-2.0, 2.0)] * dim
    if dim <= 3:
        return SampleSet.grid(box, grid_points)
    return SampleSet.random(box, random_count, seed)


def _worst(name, residuals, points, tol, kind=CERTIFIED, **details) -> ConditionResult:
    residuals = np.asarray(residuals, dtype=float)
    if residuals.size == 0:
        return ConditionResult(name, 0.0, tol, None, kind, {"n_samples": 0, **details})
    bad = ~np.isfinite(residuals)
    i = int(np.argmax(bad)) if bad.any() else int(np.argmax(residuals))
    worst = math.inf if bad.any() else float(residuals[i])
    return ConditionResult(name, worst, tol, list(map(float, points[i])), kind, {"n_samples": int(residuals.size), **details})


def _pointwise(fn, points):
    """Apply ``fn`` per point; domain errors become infinite residuals and are listed."""
    out, errors = [], []
    for pt in points:
        try:
            out.append(fn(pt))
        except (D.DomainError, ArithmeticError) as err:
            out.append(math.inf)
            errors.append({"point": list(map(float, pt)), "error": str(err)})
    return np.array(out, dtype=float), errors


def check_invariance_pde(
    sys: ControlAffineSystem, target: TargetSystem, imm: ImmersionData, samples: SampleSet, tol: float = RESIDUAL_TOL
) -> ConditionResult:
    """Worst ``|f(pi) + g(pi) c(pi) - Dpi(xi) alpha(xi)|`` over xi-samples."""

    def residual(xi):
        x = imm.pi.value(xi)
        lhs = sys.f.value(x) + sys.g.value(x) @ imm.c.value(x)
        rhs = np.asarray(jacobian(imm.pi, xi), dtype=float) @ target.alpha.value(xi)
        return float(np.linalg.norm(lhs - rhs))

    res, errors = _pointwise(residual, samples.points)
    details = {"domain_errors": errors} if errors else {}
    return _worst("invariance_pde", res, samples.points, tol, **details)


def _project_to_zero_set(phi: Map, x0, iters: int = 50):
    """Gauss-Newton projection of ``x0`` onto ``{phi = 0}`` (minimum-norm steps)."""
    x = np.array(x0, dtype=float)
    for _ in range(iters):
        r = phi.value(x)
        if np.linalg.norm(r) <= 1e-14:
            break
        J = np.asarray(jacobian(phi, x), dtype=float)
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        x = x + step
        if np.linalg.norm(step) <= 1e-15 * max(1.0, np.linalg.norm(x)):
            break
    return x, float(np.linalg.norm(phi.value(x)))


def _distance_to_image(pi: Map, x, xi_guess, rng) -> tuple[float, np.ndarray, bool]:
    """min over xi of |x - pi(xi)| by multi-start least squares."""
    p = pi.in_dim

    def fun(xi):
        return pi.value(xi) - x

    def jac(xi):
        return np.asarray(jacobian(pi, xi), dtype=float)

    starts = [np.asarray(xi_guess, dtype=float)]
    scale = max(1.0, float(np.linalg.norm(xi_guess)))
    starts += [starts[0] + scale * rng.standard_normal(p) for _ in range(N_STARTS - 1)]
    best, best_xi, converged = math.inf, starts[0], False
    for s in starts:
        try:
            sol = least_squares(fun, s, jac=jac, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=200)
        except (D.DomainError, ArithmeticError, ValueError):
            continue
        d = float(np.linalg.norm(sol.fun))
        if d < best:
            best, best_xi, converged = d, sol.x, bool(sol.success)
    return best, best_xi, converged


def check_implicit_manifold(
    imm: ImmersionData,
    xi_samples: SampleSet,
    x_samples: SampleSet,
    tol: float = RESIDUAL_TOL,
    seed: int = 0,
) -> ConditionResult:
    """Two-sided check of ``{pi(xi)} = {phi(x) = 0}``.

    (a) ``|phi(pi(xi))|`` over xi-samples.  (b) each x-sample is first
    projected onto ``{phi = 0}``; points that land there (``|phi| <= tol``)
    must lie at distance ``<= tol`` from the image of ``pi``, found by local
    least squares from five starts.  Part (b) is empirical: a failed descent
    does not prove the set identity false, and success does not prove it.
    """

    def res_a(xi):
        return float(np.linalg.norm(imm.phi.value(imm.pi.value(xi))))

    ra, errs_a = _pointwise(res_a, xi_samples.points)
    part_a = _worst("phi_vanishes_on_pi_image", ra, xi_samples.points, tol)
    if errs_a:
        part_a.details["domain_errors"] = errs_a

    rng = np.random.default_rng(seed)
    p = imm.p
    res_b, pts_b, skipped, nonconv = [], [], 0, []
    for x in x_samples.points:
        try:
            xz, r = _project_to_zero_set(imm.phi, x)
        except (D.DomainError, ArithmeticError, np.linalg.LinAlgError):
            skipped += 1
            continue
        if r > tol:
            skipped += 1
            continue
        # heuristic start: first p coordinates, the usual graph parametrisation
        guess = xz[:p] if xz.size >= p else np.zeros(p)
        d, _, ok = _distance_to_image(imm.pi, xz, guess, rng)
        if not ok and d > tol:
            nonconv.append(list(map(float, xz)))
        res_b.append(d)
        pts_b.append(xz)
    part_b = _worst(
        "zero_set_within_pi_image",
        res_b,
        np.array(pts_b).reshape(len(pts_b), -1),
        tol,
        EMPIRICAL,
        n_projected=len(res_b),
        n_skipped=skipped,
    )
    if nonconv:
        part_b.details["descent_nonconvergence"] = nonconv
    return ConditionResult.combine("implicit_manifold", [part_a, part_b], kind=PARTIAL)


def check_R_conditions(
    imm: ImmersionData,
    xi_samples: SampleSet,
    x_samples: SampleSet,
    tol: float = RESIDUAL_TOL,
    rank_rtol: float = RANK_RTOL,
) -> ConditionResult:
    """(a) ``R(x)`` full row rank on x-samples; (b) ``R(pi(xi)) = Dphi(pi(xi))``.

    Rank is tested relatively: the part residual at a sample is
    ``rank_rtol * s_max / s_min`` against tolerance 1, infinite when ``s_min`` is 0.
    """

    rank_vals = []
    sig_min = math.inf
    for x in x_samples.points:
        s = np.linalg.svd(np.atleast_2d(imm.R.value(x)), compute_uv=False)
        sig_min = min(sig_min, float(s[-1]))
        rank_vals.append(math.inf if s[-1] == 0.0 else rank_rtol * s[0] / s[-1])
    part_a = _worst("R_full_rank", rank_vals, x_samples.points, 1.0, min_singular_value=sig_min)

    def match_res(xi):
        x = imm.pi.value(xi)
        return float(np.max(np.abs(imm.R.value(x) - np.asarray(jacobian(imm.phi, x), dtype=float))))

    rb, errs = _pointwise(match_res, xi_samples.points)
    part_b = _worst("R_equals_grad_phi_on_manifold", rb, xi_samples.points, tol)
    if errs:
        part_b.details["domain_errors"] = errs
    return ConditionResult.combine("R_conditions", [part_a, part_b])


def check_beta_on_manifold(imm: ImmersionData, xi_samples: SampleSet, tol: float = RESIDUAL_TOL) -> ConditionResult:
    """Worst ``|beta(pi(xi)) - c(pi(xi))|`` over xi-samples."""

    def res(xi):
        x = imm.pi.value(xi)
        return float(np.linalg.norm(imm.beta.value(x) - imm.c.value(x)))

    r, errs = _pointwise(res, xi_samples.points)
    out = _worst("beta_on_manifold", r, xi_samples.points, tol)
    if errs:
        out.details["domain_errors"] = errs
    return out


def _simulate_to(field: Map, starts, horizon, equilibrium, tol, name, method, ode_tol, reach=True):
    equilibrium = np.asarray(equilibrium, dtype=float)
    residuals, sups, diverged = [], [], []
    for x0 in starts:
        try:
            tr = integrate(field, x0, (0.0, horizon), method, ode_tol)
        except (D.DomainError, ArithmeticError, IntegrationError) as err:
            residuals.append(math.inf)
            sups.append(math.inf)
            diverged.append({"x0": list(map(float, x0)), "error": str(err)})
            continue
        sup = tr.sup_norm()
        sups.append(sup)
        if tr.diverged:
            residuals.append(math.inf)
            diverged.append({"x0": list(map(float, x0)), "t_stop": tr.t_end})
        else:
            residuals.append(float(np.linalg.norm(tr.final - equilibrium)) if reach else 0.0)
    details = {
        "horizon": float(horizon),
        "sup_norm": float(max(sups)) if sups else 0.0,
        "n_diverged": len(diverged),
    }
    if diverged:
        details["diverged"] = diverged
    return _worst(name, residuals, np.asarray(starts, dtype=float).reshape(len(residuals), -1), tol, EMPIRICAL, **details)


def check_target_gas_empirical(
    target: TargetSystem,
    samples: SampleSet,
    horizon: float = 20.0,
    tol: float = 1e-6,
    method: str = "rk45",
    ode_tol: float = 1e-9,
) -> ConditionResult:
    """Simulate the target from each sample; all must end within ``tol`` of ``xi*``.

    Evidence only: finite-horizon convergence from finitely many initial
    conditions does not prove global asymptotic stability.
    """
    return _simulate_to(target.alpha, samples.points, horizon, target.xi_star, tol, "target_gas", method, ode_tol)


def check_closed_loop_gas(
    field: Map, x_star, samples: SampleSet, horizon: float = 20.0, tol: float = 1e-3, method="rk45", ode_tol=1e-9
) -> ConditionResult:
    """Closed-loop convergence to ``x*`` from each sample (empirical)."""
    return _simulate_to(field, samples.points, horizon, x_star, tol, "closed_loop_gas", method, ode_tol)


def check_boundedness(field: Map, samples: SampleSet, horizon: float = 20.0, method="rk45", ode_tol=1e-9) -> ConditionResult:
    """Trajectories stay finite (below the overflow guard) up to ``horizon``; reports sup |x(t)|."""
    return _simulate_to(field, samples.points, horizon, np.zeros(samples.dim), 0.0, "boundedness", method, ode_tol, reach=False)
