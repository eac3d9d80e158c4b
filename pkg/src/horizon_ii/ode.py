"""Explicit Runge-Kutta integrators with dense output and a divergence guard.

Two methods are provided:

* ``"rk4"`` -- classic fixed-step fourth-order Runge-Kutta (step ``h``),
  cubic Hermite interpolation between steps.
* ``"rk45"`` -- Dormand-Prince 5(4) embedded pair with a PI step-size
  controller and the pair's native quartic continuous extension.

Both stop early, keeping the last finite state, once any component exceeds
the overflow guard; the returned :class:`Trajectory` is then flagged
``diverged``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = ["Trajectory", "IntegrationError", "solve", "OVERFLOW_GUARD"]

OVERFLOW_GUARD = 1e9


class IntegrationError(RuntimeError):
    pass


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between 5th and embedded 4th order weights (7 stages, FSAL)
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# quartic dense output: y(t0 + s h) = y0 + h * K^T (P @ [s, s^2, s^3, s^4])
_P = np.array(
    [
        [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0, 0, 0, 0],
        [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)


@dataclass
class Trajectory:
    """Time samples of an integrated flow.

    ``times`` is strictly increasing and ``states`` has one row per time.
    ``meta`` records the method, tolerances, step statistics and ``status``
    (``"ok"`` or ``"diverged"``).  When integrated without ``t_eval`` the
    samples are the accepted step points and :meth:`at` interpolates between
    them with the method's dense output.
    """

    times: np.ndarray
    states: np.ndarray
    meta: dict = field(default_factory=dict)
    _segments: list = field(default_factory=list, repr=False)

    @property
    def diverged(self) -> bool:
        return self.meta.get("status") == "diverged"

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.states, axis=1)))

    def at(self, t: float) -> np.ndarray:
        """Dense-output state at time ``t`` within the integrated span."""
        if not self._segments:
            raise ValueError("trajectory carries no dense output")
        starts = [seg[0] for seg in self._segments]
        if t < starts[0] - 1e-14 or t > self._segments[-1][0] + self._segments[-1][1] + 1e-12:
            raise ValueError(f"t={t} outside integrated span")
        i = max(0, int(np.searchsorted(starts, t, side="right")) - 1)
        t0, h, y0, interp = self._segments[i]
        return interp((t - t0) / h) if h > 0 else y0.copy()


def _guard(y: np.ndarray, limit: float) -> bool:
    return not np.all(np.isfinite(y)) or bool(np.max(np.abs(y)) > limit)


def _rk4(fun, t0, t1, y0, h, t_eval, guard, max_steps):
    n_steps = int(np.ceil((t1 - t0) / h - 1e-12))
    if n_steps > max_steps:
        raise IntegrationError(f"rk4 would need {n_steps} steps (max_steps={max_steps})")
    grid = t0 + h * np.arange(n_steps + 1)
    grid[-1] = t1
    times, states, segments = [t0], [y0.copy()], []
    y, fy = y0.copy(), fun(t0, y0)
    status, nfev = "ok", 1
    for i in range(n_steps):
        t, tn = grid[i], grid[i + 1]
        dt = tn - t
        k1 = fy
        k2 = fun(t + dt / 2, y + dt / 2 * k1)
        k3 = fun(t + dt / 2, y + dt / 2 * k2)
        k4 = fun(tn, y + dt * k3)
        yn = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        nfev += 4
        if _guard(yn, guard):
            status = "diverged"
            break
        fn = fun(tn, yn)
        nfev += 1
        segments.append((t, dt, y, _hermite(y, yn, fy, fn, dt)))
        times.append(tn)
        states.append(yn)
        y, fy = yn, fn
    meta = {"method": "rk4", "h": h, "n_steps": len(times) - 1, "n_rejected": 0, "nfev": nfev, "status": status}
    return times, states, segments, meta


def _hermite(y0, y1, f0, f1, h):
    def interp(s):
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1

    return interp


def _dopri_interp(y0, h, K):
    Q = K.T @ _P

    def interp(s):
        return y0 + h * (Q @ np.array([s, s**2, s**3, s**4]))

    return interp


def _rms(err, y, yn, atol, rtol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(yn))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(fun, t0, y0, f0, atol, rtol, span):
    # Hairer, Norsett & Wanner starting step heuristic (order 5)
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = fun(t0 + h0, y0 + h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def _rk45(fun, t0, t1, y0, atol, rtol, t_eval, guard, max_steps, h_max):
    safety, min_factor, max_factor = 0.9, 0.2, 5.0
    alpha, beta = 0.7 / 5, 0.4 / 5  # PI gains
    n = y0.size
    K = np.empty((7, n))
    y = y0.copy()
    t = t0
    f0 = fun(t, y)
    nfev = 1
    h = _initial_step(fun, t0, y0, f0, atol, rtol, t1 - t0)
    nfev += 1
    err_prev = 1.0
    stops = list(t_eval) if t_eval is not None else []
    stop_i = 0
    times, states, segments = [t0], [y0.copy()], []
    status, n_acc, n_rej = "ok", 0, 0
    if t_eval is not None:
        if stops and stops[0] <= t0:
            stop_i = 1
        else:
            times, states = [], []
    while t < t1:
        if n_acc + n_rej >= max_steps:
            raise IntegrationError(f"rk45 exceeded max_steps={max_steps} at t={t}")
        target = stops[stop_i] if stop_i < len(stops) else t1
        h = min(h, h_max, target - t)
        hit_target = h >= target - t - 1e-14 * max(1.0, abs(t))
        K[0] = f0
        for s in range(1, 6):
            K[s] = fun(t + _C[s] * h, y + h * (np.asarray(_A[s]) @ K[:s]))
        yn = y + h * (_B @ K[:6])
        fn = fun(t + h, yn)
        K[6] = fn
        nfev += 6
        with np.errstate(all="ignore"):
            err = _rms(h * (_E @ K), y, yn, atol, rtol)
        if _guard(yn, guard):
            # an inaccurate overshoot is retried; an accurate one is a blow-up
            if np.isfinite(err) and err <= 1.0 or h < 1e-12 * max(1.0, abs(t)):
                status = "diverged"
                break
            n_rej += 1
            h *= 0.25
            continue
        if err <= 1.0:
            tn = target if hit_target else t + h
            segments.append((t, h, y, _dopri_interp(y, h, K.copy())))
            if t_eval is None:
                times.append(tn)
                states.append(yn)
            elif hit_target and stop_i < len(stops):
                times.append(tn)
                states.append(yn)
                stop_i += 1
            t, y, f0 = tn, yn, fn
            n_acc += 1
            if err == 0.0:
                factor = max_factor
            else:
                factor = safety * err ** (-alpha) * err_prev**beta
                factor = min(max_factor, max(min_factor, factor))
            err_prev = max(err, 1e-4)
            if not hit_target:
                h *= factor
            else:
                h = max(h, (h * factor))
        else:
            n_rej += 1
            h *= max(min_factor, safety * err ** (-1 / 5))
    meta = {
        "method": "rk45",
        "atol": atol,
        "rtol": rtol,
        "n_steps": n_acc,
        "n_rejected": n_rej,
        "nfev": nfev,
        "status": status,
    }
    return times, states, segments, meta


def solve(
    fun: Callable[[float, np.ndarray], np.ndarray],
    t_span: Sequence[float],
    y0,
    method: str = "rk45",
    *,
    atol: float = 1e-9,
    rtol: float = 1e-9,
    h: float = 1e-2,
    t_eval: Sequence[float] | None = None,
    max_steps: int = 1_000_000,
    guard: float = OVERFLOW_GUARD,
    h_max: float = np.inf,
) -> Trajectory:
    """Integrate ``y' = fun(t, y)`` over ``t_span``.

    If ``t_eval`` is given (increasing, inside ``t_span``), the adaptive solver
    lands exactly on each requested time and only those samples are stored
    (the initial state only if ``t_span[0]`` is requested); the fixed-step
    solver takes the requested samples from its dense output.
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise ValueError(f"t_span must be increasing, got {t_span}")
    y0 = np.array(y0, dtype=float).ravel()
    if _guard(y0, guard):
        raise ValueError("initial state is not finite or beyond the overflow guard")
    if t_eval is not None:
        t_eval = np.asarray(t_eval, dtype=float)
        if np.any(np.diff(t_eval) <= 0) or (t_eval.size and (t_eval[0] < t0 or t_eval[-1] > t1)):
            raise ValueError("t_eval must be strictly increasing and inside t_span")

    def f(t, y):
        return np.asarray(fun(t, y), dtype=float)

    if method == "rk4":
        if not h > 0:
            raise ValueError("rk4 needs a positive step h")
        times, states, segments, meta = _rk4(f, t0, t1, y0, h, t_eval, guard, max_steps)
    elif method == "rk45":
        if not (atol > 0 and rtol > 0):
            raise ValueError("tolerances must be positive")
        times, states, segments, meta = _rk45(f, t0, t1, y0, atol, rtol, t_eval, guard, max_steps, h_max)
    else:
        raise ValueError(f"unknown method {method!r}; expected 'rk4' or 'rk45'")

    traj = Trajectory(np.array(times), np.array(states), meta, segments)
    if method == "rk4" and t_eval is not None:
        reach = traj.t_end
        keep = [t for t in t_eval if t <= reach + 1e-12]
        samples = [traj.at(t) if t > t0 else y0.copy() for t in keep]
        traj = Trajectory(np.array(keep), np.array(samples).reshape(len(keep), -1), meta, segments)
    return traj
