"""Build a problem from a validated configuration and run its checks.

The CLI and the test-suite share this path: :func:`build_problem` turns the
config into maps, :func:`run` evaluates the requested checks into a
:class:`~horizon_ii.results.CertificateReport`, and :func:`export` writes the
optional CSV files.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from . import contraction as C
from . import iandi as I
from .config import CHECKS
from .dynamics import (
    ClosedLoop,
    ControlAffineSystem,
    ImmersionData,
    TargetSystem,
    check_equilibrium_consistency,
    integrate,
    write_trajectory_csv,
)
from .expr import parse
from .feedform import FeedbackFormSystem, M_map, Q_map, build_immersion
from .linstab import check_hyperbolic, fit_decay_rate, linearize_all
from .maps import ExprMap, FuncMap, Map, as_array, jacobian, state_symbols
from .ode import Trajectory
from .results import CERTIFIED, CertificateReport, ConditionResult

__all__ = ["Problem", "build_problem", "run", "export", "compare_expectations", "RunOutput"]

CONSTRAINT_TOL = 1e-8
CLOSED_FORM_TOL = 1e-6


@dataclass
class Problem:
    name: str
    kind: str
    params: dict
    sys: ControlAffineSystem
    target: TargetSystem
    imm: ImmersionData
    field: Map
    fl: C.FinslerLyapunov
    M: Map
    Q: Map
    k: float | None
    cfg: dict
    augmented: Map | None = None

    @property
    def n(self) -> int:
        return self.sys.n

    @property
    def p(self) -> int:
        return self.target.p


def _matrix(value, q: int) -> np.ndarray:
    if value is None:
        return np.eye(q)
    return np.atleast_2d(np.asarray(value, dtype=float)) if not np.isscalar(value) else np.eye(q) * float(value)


def _generic_M(imm: ImmersionData) -> Map:
    """``R^T P R`` so that ``V = dx^T M dx``."""
    R, P, n = imm.R, imm.P, imm.n

    def fn(x):
        r = R(x)
        return r.T @ P @ r

    return FuncMap(fn, n, (n, n), label="R^T P R")


def _jacobian_map(field: Map) -> Map:
    return FuncMap(lambda x: jacobian(field, x), field.in_dim, (field.in_dim, field.in_dim), label="D field")


def build_problem(cfg: Mapping) -> Problem:
    """Assemble plant, target, immersion data and closed loop from ``cfg``."""
    cfg = dict(cfg)
    kind = cfg["type"]
    params = dict(cfg.get("params", {}))
    ex = cfg["expressions"]
    n = cfg["dims"]["n"]
    xs = state_symbols(n)

    if kind == "feedback_form":
        ffs = FeedbackFormSystem(n - 1, ex["f1"], ex["pi2"], ex["beta"][0], params["k"], params)
        sys = ffs.system()
        target, imm = build_immersion(ffs)
        field = ffs.closed_loop()
        fl = C.FinslerLyapunov.from_immersion(imm)
        return Problem(cfg["name"], kind, params, sys, target, imm, field, fl, M_map(ffs), Q_map(ffs), float(params["k"]), cfg)

    p = cfg["dims"]["p"]
    x_star = cfg.get("x_star", [0.0] * n)
    xi_star = cfg.get("xi_star", [0.0] * p)
    sys = ControlAffineSystem.from_strings(ex["f"], ex["g"], params, x_star)
    target = TargetSystem.from_strings(ex["alpha"], params, xi_star)
    xis = state_symbols(p, "xi")
    pi = ExprMap(ex["pi"], xis, params)
    c = ExprMap(ex["c"], xs, params)
    phi = ExprMap(ex["phi"], xs, params)
    R = ExprMap(ex["R"], xs, params) if "R" in ex else None
    rho_cfg = ex.get("rho", 1.0)
    rho = ExprMap([rho_cfg], xs, params) if isinstance(rho_cfg, str) else float(rho_cfg)
    P = _matrix(ex.get("P"), n - p)

    augmented = None
    if kind == "augmented":
        zs = state_symbols(n - p, "z")
        v = ExprMap(ex["v"], xs + zs, params)

        def beta_fn(x):
            return v(np.concatenate([np.asarray(x, dtype=object), phi(x)]))

        beta = FuncMap(beta_fn, n, sys.m, label=f"v(x, phi(x)) with v={ex['v']}")

        def aug_fn(y):
            x = y[:n]
            dx = sys.f(x) + sys.g(x) @ v(y)
            dz = np.asarray(jacobian(phi, x), dtype=float) @ np.asarray(dx, dtype=float)
            return as_array(list(dx) + list(dz))

        augmented = FuncMap(aug_fn, 2 * n - p, 2 * n - p, label="augmented (x, z)")
    else:
        beta = ExprMap(ex["beta"], xs, params)

    imm = ImmersionData(pi=pi, c=c, phi=phi, beta=beta, P=P, R=R, rho=rho)
    field = ClosedLoop(sys, beta)
    fl = C.FinslerLyapunov.from_immersion(imm)
    k = float(rho) if not isinstance(rho, Map) else None
    return Problem(cfg["name"], kind, params, sys, target, imm, field, fl, _generic_M(imm), _jacobian_map(field), k, cfg, augmented)


# --- sampling ----------------------------------------------------------------------


def _box(spec, dim: int, default: float = 2.0):
    if spec is None:
        return [(-default, default)] * dim
    return [tuple(spec[0])] * dim if len(spec) == 1 else [tuple(b) for b in spec]


def _seeds(seed: int, count: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


@dataclass
class Samples:
    x: I.SampleSet
    xi: I.SampleSet
    target: I.SampleSet
    initial: I.SampleSet


def build_samples(problem: Problem, seed: int) -> Samples:
    cfg = problem.cfg
    smp = cfg.get("sampling", {})
    sim = cfg.get("simulation", {})
    n, p = problem.n, problem.p
    s_x, s_xi, s_target, s_init = _seeds(seed, 4)
    box = _box(smp.get("box"), n)
    if "random" in smp and "grid" not in smp:
        xs = I.SampleSet.random(box, smp["random"], s_x)
    else:
        xs = I.default_samples(n, box, s_x, smp.get("grid", 21))
    xi_box = _box(smp.get("xi_box"), p)
    xis = I.default_samples(p, xi_box, s_xi, smp.get("xi_grid", 21)) if p > 0 else I.SampleSet(np.zeros((1, 0)), "empty")
    target = I.SampleSet.random(_box(sim.get("target_box"), p, 3.0), sim.get("target_random", 50), s_target)
    listed = np.asarray(sim.get("initial_states", []), dtype=float).reshape(-1, n)
    count = sim.get("random_initial", 20)
    init_box = _box(sim.get("initial_box"), n) if "initial_box" in sim else box
    rand = I.SampleSet.random(init_box, count, s_init).points if count else np.zeros((0, n))
    initial = I.SampleSet(np.vstack([listed, rand]), "listed+random", None, {"listed": len(listed), "random": int(count)})
    return Samples(xs, xis, target, initial)


# --- curves ------------------------------------------------------------------------


def _curve(spec: Mapping, params: Mapping) -> C.Curve:
    nodes = spec.get("nodes", 16)
    if spec["type"] == "segment":
        curve = C.Curve.segment(spec["a"], spec["b"], nodes)
    else:
        g = ExprMap(spec["gamma"], ("s",), params)

        def gamma(s):
            return np.stack([g.value([si]) for si in np.atleast_1d(s)])

        def tangent(s):
            return np.stack([np.asarray(jacobian(g, [si]), dtype=float)[:, 0] for si in np.atleast_1d(s)])

        curve = C.Curve(gamma, nodes, tangent, label=f"gamma(s) = {spec['gamma']}")
    curve.label = spec["id"]
    return curve


# --- check table -------------------------------------------------------------------


@dataclass
class RunOutput:
    report: CertificateReport
    problem: Problem
    samples: Samples
    trajectories: dict[str, Trajectory] = field(default_factory=dict)
    decay: dict[str, C.DecayCurve] = field(default_factory=dict)
    cache: dict = field(default_factory=dict)


def _sim(problem: Problem) -> dict:
    sim = problem.cfg.get("simulation", {})
    return {
        "horizon": float(sim.get("horizon", 20.0)),
        "method": sim.get("method", "rk45"),
        "tol": float(sim.get("tol", 1e-9)),
        "h": float(sim.get("h", 0.01)),
        "gas_tol": float(sim.get("gas_tol", 1e-3)),
    }


def _default_checks(kind: str) -> list[str]:
    if kind == "augmented":
        return ["constraint_preserved", "closed_form"]
    return [c for c in CHECKS if c not in ("constraint_preserved", "closed_form")]


def _augmented_runs(out: RunOutput) -> list[dict]:
    """Simulate the (x, z) system from each listed initial state; cached on ``out``."""
    if "augmented" in out.cache:
        return out.cache["augmented"]
    prob = out.problem
    n = prob.n
    sim = _sim(prob)
    cfg_sim = prob.cfg.get("simulation", {})
    offset = float(cfg_sim.get("z0_offset", 0.0))
    times = np.asarray(cfg_sim.get("times", np.linspace(0.0, sim["horizon"], 11)[1:]), dtype=float)
    runs = []
    for i, x0 in enumerate(np.asarray(cfg_sim.get("initial_states", [[0.0] * n]), dtype=float).reshape(-1, n)):
        z0 = prob.imm.phi.value(x0) + offset
        y0 = np.concatenate([x0, z0])
        tr = integrate(prob.augmented, y0, (0.0, float(times[-1])), sim["method"], sim["tol"], h=sim["h"], t_eval=times)
        runs.append({"x0": x0, "z0": z0, "traj": tr})
        out.trajectories[f"augmented_{i}"] = tr
    out.cache["augmented"] = runs
    return runs


def _check_constraint(out: RunOutput) -> list[ConditionResult]:
    prob = out.problem
    n = prob.n
    worst, pt = 0.0, None
    limits = []
    for run in _augmented_runs(out):
        tr = run["traj"]
        for t, y in zip(tr.times, tr.states):
            r = float(np.max(np.abs(y[n:] - prob.imm.phi.value(y[:n]))))
            if r > worst or pt is None:
                worst, pt = r, [float(t)] + list(map(float, y))
        limits.append(float(np.max(np.abs(tr.final[n:] - prob.imm.phi.value(tr.final[:n])))))
    return [ConditionResult("constraint_preserved", worst, CONSTRAINT_TOL, pt, CERTIFIED, {"final_discrepancy": limits})]


def _check_closed_form(out: RunOutput) -> list[ConditionResult]:
    prob = out.problem
    n, q = prob.n, prob.n - prob.p
    forms = prob.cfg["expressions"].get("closed_form", {})
    names = list(state_symbols(n)) + list(state_symbols(q, "z"))
    init = [f"{s}_0" for s in names]
    symbols = ("t",) + tuple(init) + tuple(prob.params)
    worst, pt = 0.0, None
    for run in _augmented_runs(out):
        tr = run["traj"]
        y0 = np.concatenate([run["x0"], run["z0"]])
        for comp, src in forms.items():
            if comp not in names:
                raise ValueError(f"closed_form refers to unknown state {comp!r}")
            e = parse(src, symbols)
            j = names.index(comp)
            pvals = tuple(float(v) for v in prob.params.values())
            for t, y in zip(tr.times, tr.states):
                r = abs(y[j] - float(e(float(t), *y0, *pvals)))
                if r > worst or pt is None:
                    worst, pt = r, [float(t)] + list(map(float, y))
    return [ConditionResult("closed_form", worst, CLOSED_FORM_TOL, pt, CERTIFIED, {"components": sorted(forms)})]


def _summaries(out: RunOutput) -> list[dict]:
    prob = out.problem
    sim = _sim(prob)
    n_listed = out.samples.initial.info.get("listed", 0)
    rows = []
    for i, x0 in enumerate(out.samples.initial.points[:n_listed]):
        tr = integrate(prob.field, x0, (0.0, sim["horizon"]), sim["method"], sim["tol"], h=sim["h"])
        out.trajectories[f"closed_loop_{i}"] = tr
        rows.append(
            {
                "x0": x0.tolist(),
                "t_end": tr.t_end,
                "final": tr.final.tolist(),
                "final_norm": float(np.linalg.norm(tr.final)),
                "sup_norm": tr.sup_norm(),
                "diverged": tr.diverged,
            }
        )
    return rows


def run(
    cfg: Mapping,
    checks: Sequence[str] | None = None,
    seed: int = 0,
    progress: Callable[[str], None] | None = None,
) -> RunOutput:
    """Evaluate ``checks`` (default: those listed in the config, else all that apply)."""
    problem = build_problem(cfg)
    seed = int(cfg.get("sampling", {}).get("seed", seed))
    samples = build_samples(problem, seed)
    report = CertificateReport(problem.name, {**problem.params}, seed)
    out = RunOutput(report, problem, samples)
    sim = _sim(problem)
    requested = list(checks) if checks else list(cfg.get("checks") or _default_checks(problem.kind))
    decay_cfg = cfg.get("decay", {})
    imm, fl, fld = problem.imm, problem.fl, problem.field

    def length_decay():
        times = decay_cfg.get("times", list(np.linspace(0.0, 5.0, 11)))
        res = []
        for spec in cfg.get("curves", []):
            r, dc = C.check_length_decay(
                fl, fld, _curve(spec, problem.params), times, decay_cfg.get("rate_tol", 0.05), decay_cfg.get("zero_tol", 1e-6)
            )
            r.name = f"length_decay:{spec['id']}"
            out.decay[spec["id"]] = dc
            res.append(r)
        return res

    def decay_matrix():
        if problem.k is None:
            raise ValueError("decay_matrix needs a constant rho")
        return [C.check_decay_matrix_inequality(problem.M, problem.Q, problem.k, fld, samples.x)]

    def hyperbolicity():
        ld = linearize_all(problem.sys, problem.target, imm)
        contraction = [r.passed for r in report.results if r.name in ("decay_pointwise", "decay_matrix")]
        eq = next((r for r in report.results if r.name == "equilibrium"), None)
        res = check_hyperbolic(ld, all(contraction) if contraction else None, eq)
        n_listed = samples.initial.info.get("listed", 0)
        if n_listed:
            times = np.linspace(0.0, sim["horizon"], 201)
            tr = integrate(fld, samples.initial.points[0], (0.0, sim["horizon"]), sim["method"], sim["tol"], h=sim["h"], t_eval=times)
            res.details["fitted_closed_loop_rate"] = fit_decay_rate(tr.times, tr.states, problem.sys.x_star)
        report.eigenvalues = {"S": res.details.get("eig_S", []), "A": res.details.get("eig_A", [])}
        return [res]

    table: dict[str, Callable[[], list[ConditionResult]]] = {
        "equilibrium": lambda: [check_equilibrium_consistency(problem.sys, problem.target, imm)],
        "invariance_pde": lambda: [I.check_invariance_pde(problem.sys, problem.target, imm, samples.xi)],
        "implicit_manifold": lambda: [I.check_implicit_manifold(imm, samples.xi, samples.x, seed=seed)],
        "R_conditions": lambda: [I.check_R_conditions(imm, samples.xi, samples.x)],
        "beta_on_manifold": lambda: [I.check_beta_on_manifold(imm, samples.xi)],
        "target_gas": lambda: [I.check_target_gas_empirical(problem.target, samples.target, sim["horizon"])],
        "decay_pointwise": lambda: [C.check_decay_pointwise(fl, fld, samples.x, seed=seed)],
        "decay_matrix": decay_matrix,
        "length_decay": length_decay,
        "boundedness": lambda: [I.check_boundedness(fld, samples.initial, sim["horizon"], sim["method"], sim["tol"])],
        "closed_loop_gas": lambda: [
            I.check_closed_loop_gas(fld, problem.sys.x_star, samples.initial, sim["horizon"], sim["gas_tol"], sim["method"], sim["tol"])
        ],
        "hyperbolicity": hyperbolicity,
        "constraint_preserved": lambda: _check_constraint(out),
        "closed_form": lambda: _check_closed_form(out),
    }
    for name in requested:
        if name not in table:
            raise ValueError(f"unknown check {name!r}; known: {', '.join(CHECKS)}")
    order = [c for c in CHECKS if c in requested]
    for name in order:
        if progress:
            progress(name)
        t0 = time.perf_counter()
        try:
            results = table[name]()
        except Exception as err:  # recorded in the report, never fatal
            report.errors[name] = f"{type(err).__name__}: {err}"
            report.timing[name] = time.perf_counter() - t0
            continue
        dt = time.perf_counter() - t0
        for r in results:
            report.add(r, dt / max(len(results), 1))
    if problem.kind != "augmented":
        try:
            report.trajectories = {"closed_loop": _summaries(out)}
        except Exception as err:
            report.errors["trajectory_summary"] = f"{type(err).__name__}: {err}"
    return out


def export(out: RunOutput, directory, what: str) -> list[Path]:
    """Write ``traj`` or ``decay`` CSV files into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    if what == "traj":
        n = out.problem.n
        for key in sorted(out.trajectories):
            tr = out.trajectories[key]
            cols = None
            if key.startswith("augmented"):
                q = tr.states.shape[1] - n
                cols = list(state_symbols(n)) + list(state_symbols(q, "z"))
            written.append(write_trajectory_csv(tr, directory / f"{key}.csv", columns=cols))
    elif what == "decay":
        for key in sorted(out.decay):
            written.append(C.write_decay_csv(out.decay[key], directory / f"decay_{key}.csv"))
    elif what != "none":
        raise ValueError(f"unknown export kind {what!r}")
    return written


def compare_expectations(report: CertificateReport, expectations: Mapping) -> list[str]:
    """Differences between the report and an expectation table (empty when they match)."""
    diffs = []
    got = report.outcomes()
    for name, want in sorted(expectations.get("checks", {}).items()):
        have = got.get(name, "missing")
        if have != want:
            diffs.append(f"{name}: expected {want}, got {have}")
    eq = expectations.get("equilibrium")
    if eq is not None:
        for row in report.trajectories.get("closed_loop", []):
            d = float(np.linalg.norm(np.asarray(row["final"]) - np.asarray(eq, dtype=float)))
            if not d <= 1e-3:
                diffs.append(f"trajectory from {row['x0']} ends {d:.3g} away from expected equilibrium {eq}")
    return diffs
